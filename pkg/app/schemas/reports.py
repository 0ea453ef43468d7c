import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from app.domain.enums import (
    ConditionId,
    FitForm,
    IntegralVerdict,
)

MomentValue = float | Literal["infinite"]


def as_moment(value: float) -> MomentValue:
    return "infinite" if math.isinf(value) else float(value)


# -----------------------------
# Levy conditions
# -----------------------------
class MomentDiagnostic(BaseModel):
    name: str
    value: MomentValue
    extrapolated: bool = False

    @property
    def finite(self) -> bool:
        return self.value != "infinite"


class ConditionVerdict(BaseModel):
    condition: ConditionId
    d: int
    alpha: float | None = None
    holds: bool
    diagnostics: list[MomentDiagnostic] = Field(default_factory=list)
    note: str | None = None


# -----------------------------
# Tail analysis
# -----------------------------
class HillPoint(BaseModel):
    k: int
    alpha: float


class SurvivalPoint(BaseModel):
    R: float
    survival: float
    stderr: float
    exceedances: int


class SlowVariationFit(BaseModel):
    form: FitForm
    alpha: float
    slope: float
    slope_stderr: float
    intercept: float
    r_squared: float
    fit_range: tuple[float, float]
    points: int


class TailReport(BaseModel):
    sample_size: int
    top_order_statistics: list[float]
    hill: list[HillPoint]
    hill_summary: HillPoint | None = Field(
        None, description="Convention: k = floor(n^0.6); plateau selection is manual"
    )
    survival: list[SurvivalPoint]
    sv_fit: SlowVariationFit | None = None
    reference_tail: list[tuple[float, float]] | None = None


class IntegralClassification(BaseModel):
    verdict: IntegralVerdict
    method: Literal["exact", "numerical"]
    growth_rate: float | None = None
    log_power: float | None = None
    partial_integrals: tuple[float, float] | None = None


# -----------------------------
# Dimension
# -----------------------------
class ShellCount(BaseModel):
    n: int
    count: int
    a_n: float


class MinkowskiSummary(BaseModel):
    window: tuple[int, int]
    max_summary: float | None
    ols_slope: float | None
    verdict: str | None = None


class HausdorffSummary(BaseModel):
    threshold: float
    rho_grid: list[float]
    sums: list[float]
    rho_star: float
    upper_bound: bool = True


class ThicknessVerdict(BaseModel):
    theta: float
    burn_in: int
    thick: bool
    first_failure: tuple[int, int] | None = None
    failures_per_shell: list[tuple[int, int, int]] = Field(default_factory=list)


class DimensionReport(BaseModel):
    d: int
    counts: list[ShellCount]
    minkowski: MinkowskiSummary
    hausdorff: HausdorffSummary
    norm_comparison: MinkowskiSummary | None = Field(
        None, description="Minkowski summary over Euclidean shells (reported, not asserted)"
    )
    variant: dict | None = None


# -----------------------------
# Lemma checks
# -----------------------------
class LemmaCheckResult(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lemma: str
    inputs: dict
    lhs: list[float]
    rhs: list[float]
    margin: float
    passed: bool = Field(alias="pass")
    details: dict = Field(default_factory=dict)


class VerifyReport(BaseModel):
    checks: list[LemmaCheckResult]
    all_passed: bool


# -----------------------------
# Chains
# -----------------------------
class ChainScanRow(BaseModel):
    N: int
    p_AN_closed: float
    p_AN_mc: float
    cond_estimate: float
    summand: float


class ChainScanReport(BaseModel):
    R: float
    replications: int
    rows: list[ChainScanRow]
    optimal_N: int
    lower_bound: float


# -----------------------------
# Runs
# -----------------------------
class Manifest(BaseModel):
    kind: str
    package_version: str
    config: dict
    config_hash: str
    seed: int
    exit_code: int
    artifacts: dict[str, str]
