import csv
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from app.utils.hashing import canonical_json, hash_file


def _cell(value: Any) -> str:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if value is None:
        return ""
    return str(value)


class ArtifactWriter:
    """
    Writes run artifacts into one directory and records their SHA-256 hashes.

    CSV floats use repr (shortest round-trip form); JSON is canonical with an
    indent. Neither carries timestamps, so equal inputs give equal bytes.
    """

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.hashes: dict[str, str] = {}

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return self._record(name, path)

    def write_json(self, name: str, payload: Any) -> Path:
        path = self.out_dir / name
        path.write_text(canonical_json(payload, indent=2) + "\n", encoding="utf-8")
        return self._record(name, path)

    def _record(self, name: str, path: Path) -> Path:
        self.hashes[name] = hash_file(path)
        return path
