from app.core.exceptions import PresetNotFoundError

# 30 power-log gauges (a, b) for the classifier truth table, d = 1, exponent 2/d
CLASSIFY_GAUGES = [
    (0.0, 0.0),
    (0.0, 1.0),
    (0.1, 0.0),
    (0.2, 3.0),
    (0.3, -1.0),
    (0.4, 0.0),
    (0.4, 2.0),
    (0.45, 0.5),
    (0.49, 1.0),
    (0.5, -1.0),
    (0.5, 0.0),
    (0.5, 0.25),
    (0.5, 0.4),
    (0.5, 0.5),
    (0.5, 0.6),
    (0.5, 0.75),
    (0.5, 1.0),
    (0.5, 2.0),
    (0.51, -1.0),
    (0.51, 0.0),
    (0.55, -2.0),
    (0.6, 0.0),
    (0.6, -3.0),
    (0.7, 0.0),
    (0.75, -1.0),
    (1.0, 0.0),
    (1.0, -5.0),
    (1.5, 0.0),
    (2.0, 1.0),
    (3.0, -2.0),
]

PRESETS: dict[str, dict] = {
    "simulate": {
        "kind": "simulate",
        "levy": {"kind": "pareto_tail", "alpha": 1.0},
        "field": {"d": 1, "t": 1.0, "mode": "additive", "window_half_width": 25.0},
        "sampling": {"replications": 1},
        "analysis": {"lattice_radius": 20},
    },
    "tail": {
        "kind": "tail",
        "levy": {"kind": "pareto_tail", "alpha": 0.5},
        "field": {"d": 1, "t": 1.0, "mode": "additive", "window_half_width": 1.0},
        "sampling": {"replications": 100_000},
        "analysis": {"reference_single_jump": True},
    },
    "tail-multiplicative": {
        "kind": "tail",
        "levy": {"kind": "pareto_tail", "alpha": 0.5},
        "field": {"d": 1, "t": 1.0, "mode": "multiplicative", "window_half_width": 1.0},
        "sampling": {"replications": 100_000},
        "analysis": {"fit_form": "A"},
    },
    "dimension": {
        "kind": "dimension",
        "levy": {"kind": "pareto_tail", "alpha": 1.0},
        "field": {"d": 1, "t": 1.0, "mode": "additive"},
        "sampling": {"replications": 3},
        "analysis": {"variant": "gamma", "gamma": 0.5, "n_max": 12},
    },
    "chains": {
        "kind": "chains",
        "levy": {"kind": "pareto_tail", "alpha": 1.0},
        "field": {"d": 1, "t": 1.0, "mode": "multiplicative"},
        "sampling": {"replications": 100_000},
        "analysis": {"R": 10.0, "N_range": [1, 6]},
    },
    "verify": {
        "kind": "verify",
        "sampling": {"replications": 100_000},
        "analysis": {"scale": "quick"},
    },
    "classify": {
        "kind": "classify",
        "field": {"d": 1},
        "analysis": {
            "gauges": [list(g) for g in CLASSIFY_GAUGES],
            "exponent": "two_over_d",
            "numeric_check": True,
        },
    },
    "bounded-domain-compare": {
        "kind": "bounded-domain-compare",
        "levy": {"kind": "pareto_tail", "alpha": 1.0},
        "field": {
            "d": 1,
            "t": 1.0,
            "mode": "multiplicative",
            "window_half_width": 1.0,
            "padding": 0.0,
        },
        "sampling": {"replications": 100_000},
        "analysis": {"quantile": 0.999},
    },
    "truncation": {
        "kind": "truncation",
        # density 0.5 z^-1.5 on (0, inf): the alpha = 0.5 Pareto tail plus finite-m_1 small jumps
        "levy": {
            "kind": "piecewise_density",
            "knots": [[1.0, 0.5], [4.0, 0.0625]],
            "extend_tails": True,
        },
        "field": {"d": 1, "t": 1.0, "mode": "multiplicative", "window_half_width": 1.0},
        "sampling": {"replications": 10_000},
        "analysis": {"levels": 3, "base_truncation": [8, 4, 4.0], "cap_value": 100.0},
    },
}


def get_preset(name: str) -> dict:
    try:
        return PRESETS[name]
    except KeyError:
        raise PresetNotFoundError(
            f"Unknown preset '{name}'; available: {', '.join(sorted(PRESETS))}"
        ) from None
