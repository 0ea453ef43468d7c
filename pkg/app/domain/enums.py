from enum import Enum


class MeasureKind(str, Enum):
    PARETO_TAIL = "pareto_tail"
    DIRAC_MIXTURE = "dirac_mixture"
    PIECEWISE_DENSITY = "piecewise_density"
    RESTRICTED = "restricted"


class Interpolation(str, Enum):
    LOG_LINEAR = "log-linear"
    LINEAR = "linear"


class MomentKind(str, Enum):
    MU_P = "mu_p"
    M_P = "m_p"
    BIG_M_P = "M_p"
    M_LOG_P = "m_log_p"
    M_PAREN_LOG_P = "m_paren_log_p"


class ConditionId(str, Enum):
    HEAVY = "H"
    LIGHT = "L"
    SUP = "Sup"


class FieldMode(str, Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


class FitForm(str, Enum):
    A = "A"
    B = "B"


class GaugeExponent(str, Enum):
    TWO_OVER_D = "two_over_d"
    ALPHA = "alpha"


class IntegralVerdict(str, Enum):
    DIVERGES = "diverges"
    CONVERGES = "converges"


class ScaledFlavor(str, Enum):
    MULT_C = "mult_c"
    ADD_C = "add_c"
    ADD_C_LIGHT = "add_c_light"
    ADD_D = "add_d"


class FRegime(str, Enum):
    EMB = "EMb"
    EM = "EM"
    EMC = "EMc"


class PointMap(str, Enum):
    ITERLOG_THEN_ROOT = "iterlog_then_root"
    F_TRANSFORM_A = "F_transform_A"
    F_TRANSFORM_H = "F_transform_H"
    POWER = "power"


class Norm(str, Enum):
    EUCLIDEAN = "euclidean"
    SUP = "sup"


class ExperimentKind(str, Enum):
    SIMULATE = "simulate"
    TAIL = "tail"
    DIMENSION = "dimension"
    CHAINS = "chains"
    VERIFY = "verify"
    CLASSIFY = "classify"
    BOUNDED_DOMAIN_COMPARE = "bounded-domain-compare"
    TRUNCATION = "truncation"
