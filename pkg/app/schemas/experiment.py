import copy
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core.config import get_settings
from app.core.exceptions import ConfigError
from app.domain.enums import (
    ExperimentKind,
    FieldMode,
    FitForm,
    FRegime,
    GaugeExponent,
    Interpolation,
    MeasureKind,
    Norm,
    ScaledFlavor,
)
from app.domain.field import FieldConfig, Window
from app.domain.levy import DiracMixture, LevyMeasure, ParetoTail, PiecewiseDensity, Restricted
from app.domain.peaks import GrowthGauge, PeakVariant
from app.utils.hashing import to_jsonable


_INFINITIES = {"infinite": math.inf, "-infinite": -math.inf}


def _parse_infinities(data: Any) -> Any:
    if isinstance(data, str):
        return _INFINITIES.get(data, data)
    if isinstance(data, dict):
        return {k: _parse_infinities(v) for k, v in data.items()}
    if isinstance(data, list):
        return [_parse_infinities(v) for v in data]
    return data


class _Table(BaseModel):
    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="before")
    @classmethod
    def _spelled_infinities(cls, data: Any) -> Any:
        # canonical configs spell non-finite floats out
        return _parse_infinities(data)


# -----------------------------
# [levy]
# -----------------------------
class LevyTable(_Table):
    kind: MeasureKind = MeasureKind.PARETO_TAIL
    alpha: float | None = Field(None, gt=0)
    atoms: list[tuple[float, float]] | None = None
    knots: list[tuple[float, float]] | None = None
    interpolation: Interpolation = Interpolation.LOG_LINEAR
    extend_tails: bool = False
    quadrature_points: int | None = Field(None, ge=2)
    restrict: tuple[float, float] | None = Field(
        None, description="Optional (lo, hi]; hi may be inf"
    )

    @model_validator(mode="after")
    def _kind_fields(self) -> "LevyTable":
        if self.kind == MeasureKind.PARETO_TAIL and self.alpha is None:
            raise ValueError("pareto_tail needs alpha")
        if self.kind == MeasureKind.DIRAC_MIXTURE and not self.atoms:
            raise ValueError("dirac_mixture needs atoms = [[z, w], ...]")
        if self.kind == MeasureKind.PIECEWISE_DENSITY and not self.knots:
            raise ValueError("piecewise_density needs knots = [[z, f], ...]")
        if self.kind == MeasureKind.RESTRICTED:
            raise ValueError(
                "use 'restrict = [lo, hi]' on a base measure instead of kind='restricted'"
            )
        return self

    def build(self) -> LevyMeasure:
        if self.kind == MeasureKind.PARETO_TAIL:
            measure: LevyMeasure = ParetoTail(self.alpha)
        elif self.kind == MeasureKind.DIRAC_MIXTURE:
            measure = DiracMixture(tuple(tuple(a) for a in self.atoms))
        else:
            measure = PiecewiseDensity(
                knots=tuple(tuple(k) for k in self.knots),
                interpolation=self.interpolation,
                extend_tails=self.extend_tails,
                quadrature_points=self.quadrature_points,
            )
        if self.restrict is not None:
            measure = Restricted(measure, *self.restrict)
        return measure


# -----------------------------
# [field]
# -----------------------------
class FieldTable(_Table):
    d: int = Field(1, ge=1)
    t: float = Field(1.0, gt=0)
    mode: FieldMode = FieldMode.ADDITIVE
    window_half_width: float | None = Field(None, gt=0)
    window_lower: list[float] | None = None
    window_upper: list[float] | None = None
    margin_tolerance: float = Field(
        default_factory=lambda: get_settings().DEFAULT_MARGIN_TOLERANCE, gt=0, lt=1
    )
    small_jump_cutoff: float = Field(0.01, gt=0, le=1)
    picard_levels: int = Field(4, ge=0)
    picard_cone: float = Field(4.0, gt=0)
    chain_cap: int = Field(0, ge=0)
    padding: float | None = Field(None, ge=0)
    compensate_small_jumps: bool = False
    large_jump_cone: bool = False

    @model_validator(mode="after")
    def _window(self) -> "FieldTable":
        explicit = self.window_lower is not None or self.window_upper is not None
        if explicit and self.window_half_width is not None:
            raise ValueError("give either window_half_width or window_lower/window_upper")
        if explicit and (self.window_lower is None or self.window_upper is None):
            raise ValueError("window_lower and window_upper go together")
        return self

    def window(self) -> Window:
        if self.window_lower is not None:
            return Window(lower=tuple(self.window_lower), upper=tuple(self.window_upper))
        return Window.centered(self.window_half_width or 10.0, self.d)

    def build(
        self, measure: LevyMeasure, *, seed: int, window: Window | None = None
    ) -> FieldConfig:
        return FieldConfig(
            d=self.d,
            t=self.t,
            measure=measure,
            mode=self.mode,
            window=window or self.window(),
            margin_tolerance=self.margin_tolerance,
            small_jump_cutoff=self.small_jump_cutoff,
            picard_levels=self.picard_levels,
            picard_cone=self.picard_cone,
            chain_cap=self.chain_cap,
            seed=seed,
            padding=self.padding,
            compensate_small_jumps=self.compensate_small_jumps,
            large_jump_cone=self.large_jump_cone,
        )


# -----------------------------
# [sampling]
# -----------------------------
class SamplingTable(_Table):
    replications: int = Field(1, ge=1)
    seed: int | None = Field(None, ge=0, lt=2**64)
    threads: int | None = Field(None, ge=1)


# -----------------------------
# [analysis]
# -----------------------------
class AnalysisTable(_Table):
    # evaluation points and tails
    points: list[list[float]] | None = None
    lattice_radius: int | None = Field(None, ge=1)
    R_grid: list[float] | None = None
    k_grid: list[int] | None = None
    fit_form: FitForm | None = None
    fit_range: tuple[float, float] | None = None
    alpha: float | None = Field(None, gt=0)
    reference_single_jump: bool = False

    # peak sets and dimensions
    variant: Literal["gamma", "scaled", "F_M"] = "gamma"
    gamma: float = Field(0.0, ge=0)
    N: int = Field(1, ge=1)
    flavor: ScaledFlavor | None = None
    M: float = Field(0.0, ge=0)
    regime: FRegime | None = None
    norm: Norm = Norm.EUCLIDEAN
    n_max: int | None = Field(None, ge=1)
    n_range: tuple[int, int] | None = None
    continuum: bool = False
    resolution: int = Field(4, ge=2)
    theta: float | None = Field(None, gt=0, lt=1)
    rho_spacing: float = Field(0.01, gt=0)
    tail_threshold: float = Field(1.0, gt=0)
    compare_norms: bool = True
    planted_lambda: float | None = Field(None, ge=0)

    # chains
    R: float | None = Field(None, gt=0)
    N_range: tuple[int, int] = (1, 6)

    # classifier
    gauges: list[tuple[float, float]] | None = None
    exponent: GaugeExponent = GaugeExponent.TWO_OVER_D
    numeric_check: bool = True

    # verify
    scale: Literal["quick", "full"] = "quick"

    # bounded-domain contrast
    quantile: float = Field(0.999, gt=0, lt=1)

    # truncation study
    levels: int = Field(3, ge=2)
    base_truncation: tuple[int, int, float] = (8, 4, 4.0)
    cap_value: float = Field(100.0, gt=0)

    def peak_variant(self, alpha: float | None) -> PeakVariant:
        return PeakVariant(
            kind=self.variant,
            gamma=self.gamma,
            N=self.N,
            flavor=self.flavor,
            M=self.M,
            regime=self.regime,
            alpha=self.alpha or alpha,
        )

    def growth_gauges(self) -> list[GrowthGauge]:
        return [GrowthGauge(a, b) for a, b in (self.gauges or [])]

    def evaluation_points(self, d: int) -> np.ndarray:
        if self.points is not None:
            return np.asarray(self.points, dtype=float).reshape(-1, d)
        if self.lattice_radius is not None:
            axis = np.arange(-self.lattice_radius, self.lattice_radius + 1, dtype=float)
            grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
            return grid.reshape(-1, d)
        return np.zeros((1, d))


# -----------------------------
# [output]
# -----------------------------
class OutputTable(_Table):
    dir: Path | None = None


class ExperimentConfig(_Table):
    kind: ExperimentKind
    levy: LevyTable = Field(default_factory=lambda: LevyTable(alpha=1.0))
    field: FieldTable = Field(default_factory=FieldTable)
    sampling: SamplingTable = Field(default_factory=SamplingTable)
    analysis: AnalysisTable = Field(default_factory=AnalysisTable)
    output: OutputTable = Field(default_factory=OutputTable)

    def canonical(self) -> dict:
        """JSON-ready dict; the input of the config hash."""
        payload = to_jsonable(self.model_dump(exclude={"output"}))
        payload["sampling"].pop("threads", None)
        return payload

    def levy_alpha(self) -> float | None:
        return self.analysis.alpha or self.levy.alpha


# -------------------------------------------------
# Loading
# -------------------------------------------------
_TABLE_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_.-]+)\s*\]\s*(#.*)?$")
_KEY_LINE = re.compile(r"^\s*([A-Za-z0-9_-]+)\s*=")


def _locate(text: str, loc: tuple) -> int | None:
    """
    1-based line of the key named by a validation error location, else of its
    table header.
    """
    names = [part for part in loc if isinstance(part, str)]
    if not names:
        return None
    table, key = (None, names[0]) if len(names) == 1 else (names[0], names[1])
    # a table-level error (loc = ("levy",)) anchors on the "[levy]" header
    anchor = table if table is not None else key
    current = None
    header_line = None
    for number, line in enumerate(text.splitlines(), start=1):
        header = _TABLE_HEADER.match(line)
        if header:
            current = header.group(1)
            if current == anchor and header_line is None:
                header_line = number
            continue
        match = _KEY_LINE.match(line)
        if match and match.group(1) == key and current == table:
            return number
    return header_line


def config_from_dict(
    payload: dict, *, text: str | None = None, source: str = "config"
) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        problems = []
        for error in exc.errors():
            where = ".".join(str(p) for p in error["loc"])
            line = _locate(text, error["loc"]) if text else None
            prefix = f"{source}:{line}: " if line is not None else f"{source}: "
            problems.append(f"{prefix}{where}: {error['msg']}")
        raise ConfigError("\n".join(problems), details={"errors": len(problems)}) from exc


def parse_toml(text: str, *, source: str = "config") -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # tomllib messages end with "(at line L, column C)"
        raise ConfigError(f"{source}: {exc}") from exc


def parse_config_text(text: str, *, source: str = "config") -> tuple[dict, ExperimentConfig]:
    payload = parse_toml(text, source=source)
    return payload, config_from_dict(payload, text=text, source=source)


def read_config_file(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc.strerror}") from exc


def load_config(path: Path) -> tuple[dict, ExperimentConfig]:
    return parse_config_text(read_config_file(path), source=str(path))


def merge_tables(base: dict, override: dict) -> dict:
    """Table-wise merge; override keys win. Neither input is modified."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_tables(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged
