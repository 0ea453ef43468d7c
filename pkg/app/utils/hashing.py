import hashlib
import json
import math
from pathlib import Path
from typing import Any


def to_jsonable(value: Any) -> Any:
    """
    Plain JSON values; non-finite floats become "infinite", "-infinite" or "nan".
    """
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "infinite" if value > 0 else "-infinite"
        return value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if hasattr(value, "tolist") and callable(value.tolist):
        # numpy arrays and scalars
        return to_jsonable(value.tolist())
    return value


def canonical_json(payload: Any, *, indent: int | None = None) -> str:
    """
    Deterministic JSON: sorted keys, non-finite floats spelled out.
    """
    separators = (",", ":") if indent is None else (",", ": ")
    return json.dumps(
        to_jsonable(payload),
        sort_keys=True,
        separators=separators,
        indent=indent,
        allow_nan=False,
    )


def hash_payload(payload: Any) -> str:
    """
    SHA-256 of the canonical JSON form of a payload.

    Equal configs hash equally regardless of key order.
    """
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
