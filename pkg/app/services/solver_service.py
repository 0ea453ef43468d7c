import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import integrate, sparse, special
from scipy.linalg import solve_triangular
from scipy.sparse.linalg import spsolve_triangular
from scipy.spatial import cKDTree

from app.core.exceptions import (
    DomainError,
    InfiniteMassError,
    UnsupportedRegimeError,
)
from app.core.seeding import make_rng
from app.domain.enums import FieldMode
from app.domain.field import AtomSet, FieldConfig, FieldSample, Window
from app.domain.kernel import heat_kernel_r2, theta
from app.services.levy_service import LevyService

# kernel matrices larger than this many entries are built sparse
DENSE_PAIR_LIMIT = 4_000_000
SMALL_ATOM_LIMIT = 4_000


# -------------------------------------------------
# Kernel transition matrices
# -------------------------------------------------
def _transition(
    src_tau: np.ndarray,
    src_eta: np.ndarray,
    dst_tau: np.ndarray,
    dst_eta: np.ndarray,
    d: int,
    *,
    cone: float | None = None,
    cutoff: float | None = None,
):
    """
    M[i, j] = g(dst_tau[i] - src_tau[j], dst_eta[i] - src_eta[j]), times
    1{|d eta| <= cone * sqrt(d tau)} when ``cone`` is set.

    Dense unless the matrix is large and a neighbour ``cutoff`` is given.
    """
    n_dst, n_src = dst_tau.size, src_tau.size
    if cutoff is None or n_dst * n_src <= DENSE_PAIR_LIMIT:
        lag = dst_tau[:, None] - src_tau[None, :]
        diff = dst_eta[:, None, :] - src_eta[None, :, :]
        r2 = np.sum(diff * diff, axis=-1)
        values = np.asarray(heat_kernel_r2(lag, r2, d), dtype=float)
        if cone is not None and not math.isinf(cone):
            values = np.where(r2 <= cone * cone * np.maximum(lag, 0.0), values, 0.0)
        return values

    tree = cKDTree(src_eta)
    neighbours = tree.query_ball_point(dst_eta, cutoff)
    counts = np.fromiter((len(n) for n in neighbours), dtype=np.int64, count=n_dst)
    rows = np.repeat(np.arange(n_dst), counts)
    cols = (
        np.concatenate([np.asarray(n, dtype=np.int64) for n in neighbours])
        if counts.sum()
        else np.empty(0, dtype=np.int64)
    )
    lag = dst_tau[rows] - src_tau[cols]
    diff = dst_eta[rows] - src_eta[cols]
    r2 = np.sum(diff * diff, axis=-1)
    values = np.asarray(heat_kernel_r2(lag, r2, d), dtype=float)
    if cone is not None and not math.isinf(cone):
        values = np.where(r2 <= cone * cone * np.maximum(lag, 0.0), values, 0.0)
    keep = values > 0
    return sparse.csr_matrix(
        (values[keep], (rows[keep], cols[keep])), shape=(n_dst, n_src)
    )


def _cone_mask(src_tau, src_eta, dst_tau, dst_eta, cone: float) -> np.ndarray:
    lag = dst_tau[:, None] - src_tau[None, :]
    diff = dst_eta[:, None, :] - src_eta[None, :, :]
    r2 = np.sum(diff * diff, axis=-1)
    return r2 <= cone * cone * np.maximum(lag, 0.0)


@dataclass(frozen=True, eq=False)
class SmallJumpApproximation:
    """
    Picard-truncated small-jump factors at requested space-time targets.

    ``y_small[q]`` approximates Y_<(tau_q, eta_q); ``u_small[q, j]``
    approximates u_<(source_j; target_q). Both carry the compensation factor
    exp(-m_1 * elapsed time).
    """

    y_small: np.ndarray
    u_small: np.ndarray
    compensator: float
    small_atom_count: int


class FieldSolverService:
    """
    Simulates the solution field at a fixed time t.
    """

    # -----------------------------------------
    # Window padding
    # -----------------------------------------
    @staticmethod
    def padding_radius(*, config: FieldConfig, intensity: float) -> float:
        """
        r solving exp(-r^2 / (2t)) * intensity = margin_tolerance (0 if intensity is small).
        """
        if config.padding is not None:
            return float(config.padding)
        ratio = intensity / config.margin_tolerance
        if ratio <= 1.0:
            return 0.0
        return math.sqrt(2.0 * config.t * math.log(ratio))

    @staticmethod
    def _cutoff_radius(config: FieldConfig, count: int) -> float:
        ratio = max(count, 1) / config.margin_tolerance
        return math.sqrt(2.0 * config.t * math.log(ratio))

    # -----------------------------------------
    # Atom sampling
    # -----------------------------------------
    @classmethod
    def sample_atoms(
        cls,
        *,
        config: FieldConfig,
        size_interval: tuple[float, float],
        rng: np.random.Generator,
        lo_closed: bool = False,
    ) -> AtomSet:
        """
        Poisson atoms on [0, t] x padded window x size interval.
        """
        z_lo, z_hi = size_interval
        measure = config.measure
        mass = measure.mass(z_lo, z_hi, lo_closed=lo_closed)
        if math.isinf(mass):
            exposure = config.t * config.window.volume
            suggestion = LevyService.smallest_admissible_z_lo(
                measure=measure, z_hi=z_hi, exposure=exposure
            )
            raise InfiniteMassError(
                f"lambda(({z_lo:g}, {z_hi:g}]) is infinite; smallest admissible "
                f"z_lo is about {suggestion:.6g}",
                smallest_z_lo=suggestion,
            )
        radius = cls.padding_radius(config=config, intensity=config.t * mass)
        box = config.window.padded(radius)
        mean_count = config.t * box.volume * mass
        count = int(rng.poisson(mean_count)) if mean_count > 0 else 0
        tau = config.t * (1.0 - rng.random(count))
        lower = np.asarray(box.lower)
        upper = np.asarray(box.upper)
        eta = lower + (upper - lower) * rng.random((count, config.d))
        zeta = measure.sample_sizes(z_lo, z_hi, count, rng, lo_closed=lo_closed)
        return AtomSet(
            tau=tau,
            eta=eta,
            zeta=zeta,
            t=config.t,
            d=config.d,
            interval=(z_lo, z_hi),
            box=box,
        )

    # -----------------------------------------
    # Additive field
    # -----------------------------------------
    @classmethod
    def evaluate_additive(
        cls,
        *,
        atoms: AtomSet,
        config: FieldConfig,
        points: np.ndarray,
    ) -> FieldSample:
        """
        Y_+(t, x) = sum over atoms with zeta >= eps of g(t - tau, x - eta) zeta.
        """
        points = cls._check_points(config, points)
        eps = config.small_jump_cutoff
        used = atoms.select(atoms.zeta >= eps)
        targets_tau = np.full(points.shape[0], config.t)
        kernel = _transition(
            used.tau,
            used.eta,
            targets_tau,
            points,
            config.d,
            cutoff=cls._cutoff_radius(config, len(used)),
        )
        values = np.asarray(kernel @ used.zeta, dtype=float).reshape(-1)

        compensation = 0.0
        if config.compensate_small_jumps:
            m1 = config.measure.integral(1.0, eps, 1.0, lo_closed=True)
            if math.isfinite(m1) and m1 > 0:
                box = atoms.box or config.window
                coverage = np.array(
                    [cls.window_coverage(config=config, x=p, box=box) for p in points]
                )
                compensation = m1
                values = values - config.t * m1 * coverage

        meta = cls._meta(config, atoms, used_count=len(used))
        meta["compensated_first_moment"] = compensation
        return FieldSample(points=points, values=values, meta=meta)

    # -----------------------------------------
    # Small jumps
    # -----------------------------------------
    @classmethod
    def picard_small(
        cls,
        *,
        config: FieldConfig,
        small_atoms: AtomSet,
        sources: tuple[np.ndarray, np.ndarray],
        targets: tuple[np.ndarray, np.ndarray],
    ) -> SmallJumpApproximation:
        """
        Level-m Picard approximations of Y_< and u_< over the small atoms.

        Chains of at most m small atoms; every step into a point that follows
        a small atom carries 1{|d eta| <= beta sqrt(d tau)}, the first step out
        of a source does not.
        """
        config.require_multiplicative_regime()
        m = config.picard_levels
        beta = config.picard_cone
        d = config.d
        src_tau, src_eta = (np.asarray(a, dtype=float) for a in sources)
        dst_tau, dst_eta = (np.asarray(a, dtype=float) for a in targets)
        src_eta = src_eta.reshape(-1, d)
        dst_eta = dst_eta.reshape(-1, d)
        compensator = config.measure.integral(
            1.0, config.small_jump_cutoff, 1.0, lo_closed=True
        )
        if math.isinf(compensator):
            raise UnsupportedRegimeError("m_1(lambda) is infinite; multiplicative mode unsupported")
        if len(small_atoms) > SMALL_ATOM_LIMIT:
            raise UnsupportedRegimeError(
                f"{len(small_atoms)} small atoms exceed the dense Picard limit "
                f"{SMALL_ATOM_LIMIT}; raise small_jump_cutoff or shrink the window"
            )

        direct = _transition(src_tau, src_eta, dst_tau, dst_eta, d)
        y_hat = np.ones(dst_tau.size)
        u_hat = np.array(direct, dtype=float)

        if m > 0 and len(small_atoms) > 0:
            s_tau, s_eta, s_zeta = small_atoms.tau, small_atoms.eta, small_atoms.zeta
            step = _transition(s_tau, s_eta, s_tau, s_eta, d, cone=beta)
            into_target = _transition(s_tau, s_eta, dst_tau, dst_eta, d, cone=beta)
            from_source = _transition(src_tau, src_eta, s_tau, s_eta, d)

            level_y = s_zeta.copy()
            level_u = s_zeta[:, None] * from_source
            sum_y = level_y.copy()
            sum_u = level_u.copy()
            for _ in range(m - 1):
                level_y = s_zeta * (step @ level_y)
                level_u = s_zeta[:, None] * (step @ level_u)
                sum_y += level_y
                sum_u += level_u
            y_hat = y_hat + into_target @ sum_y
            u_hat = u_hat + into_target @ sum_u

        lag = dst_tau[:, None] - src_tau[None, :]
        y_small = y_hat * np.exp(-compensator * dst_tau)
        u_small = np.where(lag > 0, u_hat * np.exp(-compensator * np.maximum(lag, 0.0)), 0.0)
        return SmallJumpApproximation(
            y_small=y_small,
            u_small=u_small,
            compensator=compensator,
            small_atom_count=len(small_atoms),
        )

    # -----------------------------------------
    # Multiplicative field
    # -----------------------------------------
    @classmethod
    def evaluate_multiplicative_dp(
        cls,
        *,
        atoms: AtomSet,
        config: FieldConfig,
        points: np.ndarray,
    ) -> FieldSample:
        """
        Chain dynamic program over large atoms (zeta >= 1), time-ordered:

            S_a = zeta_a (Y_<(a) + sum_{b before a} u_<(b; a) S_b)
            Y(t, x) = Y_<(t, x) + sum_a u_<(a; t, x) S_a

        Exact for the windowed atoms when lambda((0, 1)) = 0. ``chain_cap`` N
        keeps chains with at most N large atoms.
        """
        config.require_multiplicative_regime()
        points = cls._check_points(config, points)
        d = config.d
        eps = config.small_jump_cutoff
        large = atoms.select(atoms.zeta >= 1.0)
        small = atoms.select((atoms.zeta >= eps) & (atoms.zeta < 1.0))
        n_large = len(large)
        point_tau = np.full(points.shape[0], config.t)

        if len(small) == 0 and not config.has_small_jumps:
            cutoff = cls._cutoff_radius(config, n_large)
            cone = 1.0 if config.large_jump_cone else None
            U = _transition(large.tau, large.eta, large.tau, large.eta, d, cone=cone, cutoff=cutoff)
            Ux = _transition(large.tau, large.eta, point_tau, points, d, cone=cone, cutoff=cutoff)
            y_large = np.ones(n_large)
            y_points = np.ones(points.shape[0])
            compensator = 0.0
        else:
            approx = cls.picard_small(
                config=config,
                small_atoms=small,
                sources=(large.tau, large.eta),
                targets=(
                    np.concatenate([large.tau, point_tau]),
                    np.concatenate([large.eta, points]),
                ),
            )
            u_all = approx.u_small
            if config.large_jump_cone:
                u_all = u_all * _cone_mask(
                    large.tau,
                    large.eta,
                    np.concatenate([large.tau, point_tau]),
                    np.concatenate([large.eta, points]),
                    1.0,
                )
            U, Ux = u_all[:n_large], u_all[n_large:]
            y_large, y_points = approx.y_small[:n_large], approx.y_small[n_large:]
            compensator = approx.compensator

        S = cls._chain_weights(U, large.zeta, y_large, config.chain_cap)
        values = y_points + np.asarray(Ux @ S, dtype=float).reshape(-1)

        meta = cls._meta(config, atoms, used_count=n_large + len(small))
        meta["large_atom_count"] = n_large
        meta["small_atom_count"] = len(small)
        meta["compensator"] = compensator
        return FieldSample(points=points, values=values, meta=meta)

    @staticmethod
    def _chain_weights(U, zeta: np.ndarray, y_start: np.ndarray, cap: int) -> np.ndarray:
        n = zeta.size
        if n == 0:
            return np.zeros(0)
        rhs = zeta * y_start
        if cap > 0:
            level = rhs.copy()
            total = level.copy()
            for _ in range(cap - 1):
                level = zeta * np.asarray(U @ level, dtype=float).reshape(-1)
                total += level
            return total
        if sparse.issparse(U):
            A = (sparse.identity(n, format="csr") - sparse.diags(zeta) @ U).tocsr()
            return spsolve_triangular(A, rhs, lower=True, unit_diagonal=True)
        A = np.eye(n) - zeta[:, None] * U
        return solve_triangular(A, rhs, lower=True, unit_diagonal=True)

    # -----------------------------------------
    # Pipelines
    # -----------------------------------------
    @classmethod
    def evaluate(cls, *, atoms: AtomSet, config: FieldConfig, points: np.ndarray) -> FieldSample:
        if config.mode == FieldMode.ADDITIVE:
            return cls.evaluate_additive(atoms=atoms, config=config, points=points)
        return cls.evaluate_multiplicative_dp(atoms=atoms, config=config, points=points)

    @classmethod
    def sample_config_atoms(cls, *, config: FieldConfig, rng: np.random.Generator) -> AtomSet:
        if config.mode == FieldMode.MULTIPLICATIVE:
            config.require_multiplicative_regime()
        return cls.sample_atoms(
            config=config,
            size_interval=(config.small_jump_cutoff, math.inf),
            rng=rng,
            lo_closed=True,
        )

    @classmethod
    def sample_field(
        cls,
        *,
        config: FieldConfig,
        points: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> FieldSample:
        rng = rng if rng is not None else make_rng(config.seed)
        atoms = cls.sample_config_atoms(config=config, rng=rng)
        return cls.evaluate(atoms=atoms, config=config, points=points)

    # -----------------------------------------
    # Suprema over unit cubes
    # -----------------------------------------
    @staticmethod
    def _cube_grid(d: int, resolution: int) -> np.ndarray:
        axis = np.linspace(0.0, 1.0, resolution)
        return np.array(list(product(axis, repeat=d)), dtype=float)

    @classmethod
    def cube_sups(
        cls,
        *,
        config: FieldConfig,
        atoms: AtomSet,
        cube_origins: np.ndarray,
        resolution: int,
    ) -> FieldSample:
        """
        Grid maxima of the field over unit cubes [q, q + 1]^d (a lower bound of the sup).
        """
        if resolution < 2:
            raise DomainError("resolution must be >= 2")
        origins = np.asarray(cube_origins, dtype=float).reshape(-1, config.d)
        grid = cls._cube_grid(config.d, resolution)
        pts = (origins[:, None, :] + grid[None, :, :]).reshape(-1, config.d)
        sample = cls.evaluate(atoms=atoms, config=config, points=pts)
        table = sample.values.reshape(origins.shape[0], grid.shape[0])
        best = np.argmax(table, axis=1)
        sups = table[np.arange(origins.shape[0]), best]
        argmax = origins + grid[best]
        meta = dict(sample.meta)
        meta["resolution"] = resolution
        return FieldSample(points=origins, values=sups, meta=meta, argmax=argmax)

    @classmethod
    def field_sup(
        cls,
        *,
        config: FieldConfig,
        cube: np.ndarray,
        resolution: int,
        rng: np.random.Generator | None = None,
        atoms: AtomSet | None = None,
    ) -> tuple[float, np.ndarray]:
        """
        (grid maximum over the unit cube with lower corner ``cube``, grid argmax).
        """
        if atoms is None:
            rng = rng if rng is not None else make_rng(config.seed)
            atoms = cls.sample_config_atoms(config=config, rng=rng)
        table = cls.cube_sups(
            config=config, atoms=atoms, cube_origins=np.asarray(cube), resolution=resolution
        )
        return float(table.values[0]), table.argmax[0]

    # -----------------------------------------
    # Truncation schedule
    # -----------------------------------------
    @staticmethod
    def truncation_decay(*, p: float, m: int, beta: float, d: int) -> float:
        """
        exp(-beta) + m^(-theta_p m / (3p)), proportional to the truncation error
        up to unknown constants.
        """
        if not 1.0 < p < 1.0 + 2.0 / d:
            raise DomainError("truncation_decay needs 1 < p < 1 + 2/d")
        th = theta(p, d)
        if th <= 0:
            raise DomainError("theta_p must be positive")
        return math.exp(-beta) + float(m) ** (-th * m / (3.0 * p))

    @classmethod
    def schedule_truncation(cls, *, p: float, d: int, tolerance: float) -> tuple[int, float]:
        """
        Smallest doubling (m, beta) = (2^k, 2^k) whose decay factor is below tolerance.
        """
        m, beta = 1, 1.0
        while cls.truncation_decay(p=p, m=m, beta=beta, d=d) > tolerance:
            m, beta = 2 * m, 2.0 * beta
            if m > 2**20:
                raise DomainError(f"No truncation level reaches tolerance {tolerance}")
        return m, beta

    # -----------------------------------------
    # Helpers
    # -----------------------------------------
    @staticmethod
    def window_coverage(*, config: FieldConfig, x: np.ndarray, box: Window | None = None) -> float:
        """
        (1/t) * integral over (0, t) x box of g(t - s, x - y) dy ds.
        """
        box = box or config.window
        x = np.asarray(x, dtype=float).reshape(config.d)
        lower = np.asarray(box.lower)
        upper = np.asarray(box.upper)

        def mass(u: float) -> float:
            if u <= 0:
                return float(np.all((lower < x) & (x < upper)))
            root = math.sqrt(u)
            return float(
                np.prod(special.ndtr((upper - x) / root) - special.ndtr((lower - x) / root))
            )

        value, _ = integrate.quad(mass, 0.0, config.t, limit=200)
        return value / config.t

    @staticmethod
    def _check_points(config: FieldConfig, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, config.d)
        if not config.window.strictly_contains(points):
            raise DomainError("Evaluation points must lie strictly inside the window")
        return points

    @staticmethod
    def _meta(config: FieldConfig, atoms: AtomSet, *, used_count: int) -> dict:
        eps = config.small_jump_cutoff
        neglected = config.measure.integral(1.0, 0.0, eps)
        return {
            "seed": config.seed,
            "mode": config.mode.value,
            "t": config.t,
            "atom_count": len(atoms),
            "used_atom_count": used_count,
            "truncation": config.truncation(),
            "small_jump_bias": config.t * neglected if math.isfinite(neglected) else math.inf,
            "padded_box": None
            if atoms.box is None
            else {"lower": list(atoms.box.lower), "upper": list(atoms.box.upper)},
        }
