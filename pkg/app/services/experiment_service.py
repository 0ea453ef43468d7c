import json
import math
import time
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import AcceptanceCheckError, ConfigError
from app.core.logging import get_logger
from app.core.seeding import make_rng
from app.db.session import get_db_session, init_db
from app.domain.enums import ExperimentKind
from app.domain.field import FieldConfig, FieldSample, Window
from app.domain.kernel import single_jump_tail
from app.domain.levy import ParetoTail
from app.domain.peaks import PeakSet
from app.repositories.run_repository import RunRepository
from app.schemas.experiment import (
    ExperimentConfig,
    config_from_dict,
    merge_tables,
    parse_toml,
    read_config_file,
)
from app.schemas.presets import get_preset
from app.schemas.reports import Manifest
from app.services.chain_service import ChainService
from app.services.dimension_service import DimensionService
from app.services.solver_service import FieldSolverService
from app.services.tail_service import TailService
from app.services.verify_service import VerificationService
from app.utils.artifacts import ArtifactWriter
from app.utils.hashing import canonical_json, hash_file, hash_payload
from app.workers.replication_runner import ReplicationRunner, resolve_threads

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"
ACCEPTANCE_FAILED_EXIT = 3
DEFAULT_N_MAX = 8
PLANTED_N_MAX = 16
BOUNDED_DOMAIN_SIGMAS = 3.0
TRUNCATION_TOLERANCE = 0.01


def package_version() -> str:
    try:
        return metadata.version("levy-she-lab")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass(frozen=True)
class RunOutcome:
    out_dir: Path
    manifest_path: Path
    manifest: Manifest
    failures: tuple[str, ...] = ()

    @property
    def exit_code(self) -> int:
        return self.manifest.exit_code


class ExperimentService:
    """
    Runs one configured experiment and persists its artifacts and manifest.
    """

    # -----------------------------------------
    # Configuration
    # -----------------------------------------
    @staticmethod
    def resolve_config(
        *,
        preset: str | None = None,
        config_path: Path | None = None,
        seed: int | None = None,
    ) -> ExperimentConfig:
        """
        Preset tables, overridden by the config file, overridden by --seed.
        """
        if preset is None and config_path is None:
            raise ConfigError("Give --config PATH or --preset NAME")
        payload = get_preset(preset) if preset is not None else {}
        text = None
        source = f"preset:{preset}"
        if config_path is not None:
            source = str(config_path)
            text = read_config_file(config_path)
            payload = merge_tables(payload, parse_toml(text, source=source))
        if seed is not None:
            payload = merge_tables(payload, {"sampling": {"seed": seed}})
        return config_from_dict(payload, text=text, source=source)

    @staticmethod
    def _with_seed(config: ExperimentConfig) -> tuple[ExperimentConfig, int]:
        seed = config.sampling.seed
        if seed is None:
            seed = get_settings().DEFAULT_SEED
            sampling = config.sampling.model_copy(update={"seed": seed})
            config = config.model_copy(update={"sampling": sampling})
        return config, int(seed)

    @staticmethod
    def _field_config(
        config: ExperimentConfig, *, seed: int, window: Window | None = None
    ) -> FieldConfig:
        return config.field.build(config.levy.build(), seed=seed, window=window)

    # -----------------------------------------
    # Entry points
    # -----------------------------------------
    @classmethod
    def run(
        cls,
        config: ExperimentConfig,
        *,
        out_dir: Path | None = None,
        threads: int | None = None,
        raise_on_failure: bool = True,
    ) -> RunOutcome:
        config, seed = cls._with_seed(config)
        canonical = config.canonical()
        config_hash = hash_payload(canonical)
        kind = ExperimentKind(config.kind)
        if threads is None:
            threads = config.sampling.threads
        threads = resolve_threads(threads)
        out_dir = Path(
            out_dir
            or config.output.dir
            or get_settings().OUTPUT_DIR / f"{kind.value}-{config_hash[:12]}-{seed}"
        )

        logger.info(
            "experiment_started",
            extra={
                "experiment": kind.value,
                "seed": seed,
                "replications": config.sampling.replications,
                "threads": threads,
            },
        )
        started = time.perf_counter()
        writer = ArtifactWriter(out_dir)
        handler = getattr(cls, f"_run_{kind.value.replace('-', '_')}")
        failures = tuple(handler(config, writer=writer, seed=seed, threads=threads))
        exit_code = ACCEPTANCE_FAILED_EXIT if failures else 0

        manifest = Manifest(
            kind=kind.value,
            package_version=package_version(),
            config=canonical,
            config_hash=config_hash,
            seed=seed,
            exit_code=exit_code,
            artifacts=dict(sorted(writer.hashes.items())),
        )
        manifest_path = out_dir / MANIFEST_NAME
        manifest_path.write_text(
            canonical_json(manifest.model_dump(), indent=2) + "\n", encoding="utf-8"
        )
        cls._register(manifest, out_dir=out_dir, manifest_path=manifest_path)

        logger.info(
            "experiment_completed",
            extra={
                "experiment": kind.value,
                "seed": seed,
                "artifact": str(manifest_path),
                "duration_ms": int((time.perf_counter() - started) * 1000),
                "exit_code": exit_code,
            },
        )
        outcome = RunOutcome(
            out_dir=out_dir, manifest_path=manifest_path, manifest=manifest, failures=failures
        )
        if failures and raise_on_failure:
            raise AcceptanceCheckError(
                f"Failed checks: {', '.join(failures)}", details={"failed": list(failures)}
            )
        return outcome

    @classmethod
    def replay(
        cls,
        manifest_path: Path,
        *,
        out_dir: Path | None = None,
        threads: int | None = None,
    ) -> RunOutcome:
        """
        Re-runs the stored config and seed; every artifact hash must match.
        """
        manifest_path = Path(manifest_path)
        try:
            stored = Manifest.model_validate(json.loads(manifest_path.read_text()))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"Cannot read manifest {manifest_path}: {exc}") from exc
        config = config_from_dict(stored.config, source=str(manifest_path))
        if hash_payload(config.canonical()) != stored.config_hash:
            raise ConfigError(f"{manifest_path}: stored config does not match its hash")

        outcome = cls.run(
            config,
            out_dir=out_dir or manifest_path.parent / "replay",
            threads=threads,
            raise_on_failure=False,
        )
        produced = outcome.manifest.artifacts
        mismatched = sorted(
            name
            for name in set(stored.artifacts) | set(produced)
            if stored.artifacts.get(name) != produced.get(name)
        )
        if mismatched:
            raise AcceptanceCheckError(
                f"Replay differs from {manifest_path}: {', '.join(mismatched)}",
                details={"artifacts": mismatched},
            )
        return outcome

    @staticmethod
    def _register(manifest: Manifest, *, out_dir: Path, manifest_path: Path) -> None:
        if not init_db():
            return
        with get_db_session() as db:
            RunRepository.create(
                db,
                kind=manifest.kind,
                config_hash=manifest.config_hash,
                seed=manifest.seed,
                output_dir=str(out_dir),
                manifest_hash=hash_file(manifest_path),
                exit_code=manifest.exit_code,
            )

    # -------------------------------------------------
    # simulate
    # -------------------------------------------------
    @classmethod
    def _run_simulate(
        cls, config: ExperimentConfig, *, writer: ArtifactWriter, seed: int, threads: int
    ) -> list[str]:
        field_config = cls._field_config(config, seed=seed)
        analysis = config.analysis
        points = analysis.evaluation_points(field_config.d)

        def replicate(i: int, rng: np.random.Generator) -> FieldSample:
            if not analysis.continuum:
                return FieldSolverService.sample_field(config=field_config, points=points, rng=rng)
            atoms = FieldSolverService.sample_config_atoms(config=field_config, rng=rng)
            return FieldSolverService.cube_sups(
                config=field_config,
                atoms=atoms,
                cube_origins=np.floor(points),
                resolution=analysis.resolution,
            )

        samples = ReplicationRunner.map(
            replicate, seed=seed, count=config.sampling.replications, threads=threads
        )

        header, _ = samples[0].csv_rows()
        if samples[0].is_cube_table:
            header = header + [f"argmax{j + 1}" for j in range(field_config.d)]
        rows = []
        for i, sample in enumerate(samples):
            _, sample_rows = sample.csv_rows()
            for j, row in enumerate(sample_rows):
                extra = list(sample.argmax[j]) if sample.is_cube_table else []
                rows.append([i, *row, *extra])
        writer.write_csv("field.csv", ["replication", *header], rows)
        writer.write_json("field_meta.json", [s.meta for s in samples])

        norms = np.max(np.abs(points), axis=1) if points.size else np.zeros(1)
        radii = np.arange(1.0, math.floor(float(norms.max())) + 1.0)
        if radii.size:
            profile = TailService.running_max_profile(
                sample=samples[0], radii=radii, norm=analysis.norm
            )
            writer.write_csv("running_max.csv", ["r", "running_max"], profile)
        return []

    # -------------------------------------------------
    # tail
    # -------------------------------------------------
    @classmethod
    def _point_samples(
        cls, field_config: FieldConfig, x: np.ndarray, *, seed: int, count: int, threads: int
    ) -> np.ndarray:
        def replicate(i: int, rng: np.random.Generator) -> float:
            sample = FieldSolverService.sample_field(config=field_config, points=x, rng=rng)
            return float(sample.values[0])

        return np.array(ReplicationRunner.map(replicate, seed=seed, count=count, threads=threads))

    @classmethod
    def _run_tail(
        cls, config: ExperimentConfig, *, writer: ArtifactWriter, seed: int, threads: int
    ) -> list[str]:
        field_config = cls._field_config(config, seed=seed)
        analysis = config.analysis
        x = analysis.evaluation_points(field_config.d)[:1]
        values = cls._point_samples(
            field_config, x, seed=seed, count=config.sampling.replications, threads=threads
        )
        alpha = config.levy_alpha()

        reference = None
        if analysis.reference_single_jump:
            if alpha is None:
                raise ConfigError("reference_single_jump needs an alpha")
            # mass of the heat kernel over the noise window
            kernel_mass = field_config.t * FieldSolverService.window_coverage(
                config=field_config, x=x[0]
            )

            def reference(R: float) -> float:
                return kernel_mass * R ** (-alpha)

        report = TailService.build_tail_report(
            samples=values,
            R_grid=analysis.R_grid,
            ks=analysis.k_grid,
            fit_form=analysis.fit_form,
            alpha=alpha,
            d=field_config.d,
            fit_range=analysis.fit_range,
            reference_tail=reference,
        )

        writer.write_csv(
            "samples.csv", ["replication", "value"], [[i, v] for i, v in enumerate(values)]
        )
        writer.write_csv("hill.csv", ["k", "alpha_hat"], [[h.k, h.alpha] for h in report.hill])
        ref = dict(report.reference_tail or [])
        writer.write_csv(
            "survival.csv",
            ["R", "survival", "stderr", "exceedances", "reference"],
            [[p.R, p.survival, p.stderr, p.exceedances, ref.get(p.R)] for p in report.survival],
        )
        payload = report.model_dump()
        payload["single_jump_tail"] = None
        if analysis.reference_single_jump and isinstance(field_config.measure, ParetoTail):
            # whole-space heuristic, R^(-alpha) times a constant
            unit = single_jump_tail(alpha, field_config.t, field_config.d, 1.0)
            payload["single_jump_tail"] = [(p.R, unit * p.R ** (-alpha)) for p in report.survival]
        writer.write_json("tail_report.json", payload)
        return []

    # -------------------------------------------------
    # dimension
    # -------------------------------------------------
    @staticmethod
    def _lattice(radius: int, d: int, *, cubes: bool) -> np.ndarray:
        axis = np.arange(-radius, radius if cubes else radius + 1, dtype=float)
        grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
        return grid.reshape(-1, d)

    @classmethod
    def _run_dimension(
        cls, config: ExperimentConfig, *, writer: ArtifactWriter, seed: int, threads: int
    ) -> list[str]:
        analysis = config.analysis
        d = config.field.d
        planted = analysis.planted_lambda is not None
        n_max = analysis.n_max or (PLANTED_N_MAX if planted else DEFAULT_N_MAX)
        n_range = analysis.n_range or (1, n_max)
        spacing = analysis.rho_spacing
        rho_grid = np.round(np.arange(0.0, d + 0.5 + 0.5 * spacing, spacing), 12)

        if planted:

            def replicate(i: int, rng: np.random.Generator) -> PeakSet:
                return DimensionService.planted_set(
                    lam=analysis.planted_lambda, d=d, n_max=n_max, rng=rng
                )

        else:
            radius = math.floor(math.exp(n_max))
            window = Window.centered(radius + 2.0, d)
            field_config = cls._field_config(config, seed=seed, window=window)
            variant = analysis.peak_variant(config.levy_alpha())
            points = cls._lattice(radius, d, cubes=analysis.continuum)

            def replicate(i: int, rng: np.random.Generator) -> PeakSet:
                atoms = FieldSolverService.sample_config_atoms(config=field_config, rng=rng)
                if analysis.continuum:
                    sample = FieldSolverService.cube_sups(
                        config=field_config,
                        atoms=atoms,
                        cube_origins=points,
                        resolution=analysis.resolution,
                    )
                else:
                    sample = FieldSolverService.evaluate(
                        atoms=atoms, config=field_config, points=points
                    )
                return DimensionService.extract_peak_set(
                    sample=sample, variant=variant, radius=math.exp(n_max), norm=analysis.norm
                )

        peak_sets = ReplicationRunner.map(
            replicate, seed=seed, count=config.sampling.replications, threads=threads
        )

        reports, thickness = [], []
        for peak_set in peak_sets:
            reports.append(
                DimensionService.dimension_report(
                    peak_set=peak_set,
                    n_range=n_range,
                    rho_grid=rho_grid,
                    tail_threshold=analysis.tail_threshold,
                    compare_norms=analysis.compare_norms,
                )
            )
            if analysis.theta is not None:
                thickness.append(
                    DimensionService.theta_thick_check(
                        peak_set=peak_set, theta=analysis.theta, n_range=n_range
                    )
                )

        minkowski = [
            r.minkowski.max_summary for r in reports if r.minkowski.max_summary is not None
        ]
        rho_star = [r.hausdorff.rho_star for r in reports]
        writer.write_csv(
            "shells.csv",
            ["replication", "n", "count", "a_n"],
            [[i, c.n, c.count, c.a_n] for i, r in enumerate(reports) for c in r.counts],
        )
        writer.write_csv(
            "hausdorff.csv",
            ["replication", "rho", "sum"],
            [
                [i, rho, total]
                for i, r in enumerate(reports)
                for rho, total in zip(r.hausdorff.rho_grid, r.hausdorff.sums)
            ],
        )
        writer.write_csv(
            "peak_set.csv",
            ["replication", *[f"q{j + 1}" for j in range(d)]],
            [[i, *map(int, q)] for i, s in enumerate(peak_sets) for q in s.cubes],
        )
        writer.write_json(
            "dimension_report.json",
            {
                "reports": [r.model_dump() for r in reports],
                "thickness": [v.model_dump() for v in thickness] or None,
                "mean_minkowski": float(np.mean(minkowski)) if minkowski else None,
                "mean_rho_star": float(np.mean(rho_star)),
            },
        )
        return []

    # -------------------------------------------------
    # chains
    # -------------------------------------------------
    @classmethod
    def _run_chains(
        cls, config: ExperimentConfig, *, writer: ArtifactWriter, seed: int, threads: int
    ) -> list[str]:
        analysis = config.analysis
        d = config.field.d
        report = ChainService.lower_bound_scan(
            t=config.field.t,
            x=analysis.evaluation_points(d)[0],
            d=d,
            measure=config.levy.build(),
            R=analysis.R or 10.0,
            N_range=analysis.N_range,
            replications=config.sampling.replications,
            rng=make_rng(seed),
        )
        writer.write_csv(
            "chain_scan.csv",
            ["N", "p_AN_closed", "p_AN_mc", "cond_estimate", "summand"],
            [[r.N, r.p_AN_closed, r.p_AN_mc, r.cond_estimate, r.summand] for r in report.rows],
        )
        writer.write_json("chain_scan.json", report.model_dump())
        return []

    # -------------------------------------------------
    # verify
    # -------------------------------------------------
    @classmethod
    def _run_verify(
        cls, config: ExperimentConfig, *, writer: ArtifactWriter, seed: int, threads: int
    ) -> list[str]:
        report = VerificationService.run(
            seed=seed,
            scale=config.analysis.scale,
            replications=config.sampling.replications,
            threads=threads,
        )
        writer.write_csv(
            "verify.csv",
            ["lemma", "pass", "margin", "inputs"],
            [[c.lemma, c.passed, c.margin, canonical_json(c.inputs)] for c in report.checks],
        )
        writer.write_json("verify_report.json", report.model_dump(by_alias=True))
        return [c.lemma for c in report.checks if not c.passed]

    # -------------------------------------------------
    # classify
    # -------------------------------------------------
    @classmethod
    def _run_classify(
        cls, config: ExperimentConfig, *, writer: ArtifactWriter, seed: int, threads: int
    ) -> list[str]:
        analysis = config.analysis
        d = config.field.d
        alpha = config.levy_alpha()
        rows, results = [], []
        for gauge in analysis.growth_gauges():
            exact = TailService.classify_integral(
                gauge=gauge, d=d, exponent=analysis.exponent, alpha=alpha
            )
            numeric = (
                TailService.classify_integral_numeric(
                    f=gauge, d=d, exponent=analysis.exponent, alpha=alpha
                )
                if analysis.numeric_check
                else None
            )
            agree = None if numeric is None else numeric.verdict == exact.verdict
            rows.append(
                [
                    gauge.a,
                    gauge.b,
                    exact.verdict.value,
                    numeric.verdict.value if numeric else None,
                    agree,
                ]
            )
            results.append(
                {
                    "a": gauge.a,
                    "b": gauge.b,
                    "exact": exact.model_dump(),
                    "numerical": numeric.model_dump() if numeric else None,
                }
            )
        writer.write_csv("classify.csv", ["a", "b", "exact", "numerical", "agree"], rows)
        writer.write_json(
            "classify.json",
            {"d": d, "exponent": analysis.exponent.value, "gauges": results},
        )
        return []

    # -------------------------------------------------
    # bounded-domain-compare
    # -------------------------------------------------
    @classmethod
    def _run_bounded_domain_compare(
        cls, config: ExperimentConfig, *, writer: ArtifactWriter, seed: int, threads: int
    ) -> list[str]:
        """
        The halved-window run reuses the full run's atoms that fall in its own
        padded box, so both fields are driven by one noise realization.
        """
        full = cls._field_config(config, seed=seed)
        half = replace(full, window=full.window.halved())
        x = config.analysis.evaluation_points(full.d)[:1]
        mass = full.measure.mass(full.small_jump_cutoff, math.inf, lo_closed=True)
        half_box = half.window.padded(
            FieldSolverService.padding_radius(config=half, intensity=half.t * mass)
        )

        def replicate(i: int, rng: np.random.Generator) -> tuple[float, float]:
            atoms = FieldSolverService.sample_config_atoms(config=full, rng=rng)
            inside = np.all(
                (atoms.eta > np.asarray(half_box.lower)) & (atoms.eta < np.asarray(half_box.upper)),
                axis=1,
            )
            restricted = replace(atoms.select(inside), box=half_box)
            y_full = FieldSolverService.evaluate(atoms=atoms, config=full, points=x)
            y_half = FieldSolverService.evaluate(atoms=restricted, config=half, points=x)
            return float(y_full.values[0]), float(y_half.values[0])

        pairs = np.array(
            ReplicationRunner.map(
                replicate, seed=seed, count=config.sampling.replications, threads=threads
            )
        )
        y_full, y_half = pairs[:, 0], pairs[:, 1]
        n = y_full.size
        R = float(np.quantile(y_full, config.analysis.quantile))
        hit_full = y_full > R
        hit_half = y_half > R
        p_full, p_half = float(hit_full.mean()), float(hit_half.mean())
        se_full = math.sqrt(p_full * (1.0 - p_full) / n)
        se_half = math.sqrt(p_half * (1.0 - p_half) / n)
        diff = hit_full.astype(float) - hit_half.astype(float)
        paired_se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        paired_z = (p_full - p_half) / paired_se if paired_se > 0 else math.inf
        unpaired_se = math.hypot(se_full, se_half)
        unpaired_z = (p_full - p_half) / unpaired_se if unpaired_se > 0 else math.inf

        grid = TailService.default_R_grid(y_full)
        full_curve = TailService.survival_curve(samples=y_full, R_grid=grid)
        half_curve = TailService.survival_curve(samples=y_half, R_grid=grid)
        writer.write_csv(
            "compare_survival.csv",
            ["R", "survival_full", "stderr_full", "survival_half", "stderr_half"],
            [
                [f.R, f.survival, f.stderr, h.survival, h.stderr]
                for f, h in zip(full_curve, half_curve)
            ],
        )

        def window(w: Window) -> dict:
            return {"lower": list(w.lower), "upper": list(w.upper)}

        writer.write_json(
            "compare.json",
            {
                "R": R,
                "quantile": config.analysis.quantile,
                "replications": n,
                "full": {"window": window(full.window), "frequency": p_full, "stderr": se_full},
                "half": {"window": window(half.window), "frequency": p_half, "stderr": se_half},
                "paired": {"difference": p_full - p_half, "stderr": paired_se, "z": paired_z},
                "unpaired_z": unpaired_z,
                "lighter": bool(p_half < p_full and paired_z >= BOUNDED_DOMAIN_SIGMAS),
            },
        )
        return []

    # -------------------------------------------------
    # truncation
    # -------------------------------------------------
    @classmethod
    def _run_truncation(
        cls, config: ExperimentConfig, *, writer: ArtifactWriter, seed: int, threads: int
    ) -> list[str]:
        """
        Doubles (chain_cap, picard_levels, picard_cone) level by level and
        evaluates every level on the same atoms of each replication.
        """
        analysis = config.analysis
        base = cls._field_config(config, seed=seed)
        N0, m0, beta0 = analysis.base_truncation
        levels = [
            replace(base, chain_cap=N0 * 2**j, picard_levels=m0 * 2**j, picard_cone=beta0 * 2**j)
            for j in range(analysis.levels)
        ]
        x = analysis.evaluation_points(base.d)[:1]

        def replicate(i: int, rng: np.random.Generator) -> list[float]:
            atoms = FieldSolverService.sample_config_atoms(config=base, rng=rng)
            return [
                float(FieldSolverService.evaluate(atoms=atoms, config=level, points=x).values[0])
                for level in levels
            ]

        values = np.array(
            ReplicationRunner.map(
                replicate, seed=seed, count=config.sampling.replications, threads=threads
            )
        )
        capped = np.minimum(values, analysis.cap_value)
        means = capped.mean(axis=0)
        if capped.shape[0] > 1:
            stderrs = capped.std(axis=0, ddof=1) / math.sqrt(capped.shape[0])
        else:
            stderrs = np.full(means.size, math.inf)
        changes = [None] + [
            abs(means[j] - means[j - 1]) / abs(means[j - 1]) if means[j - 1] != 0 else math.inf
            for j in range(1, means.size)
        ]
        steps = [c for c in changes if c is not None]
        decreasing = all(b <= a for a, b in zip(steps, steps[1:]))

        writer.write_csv(
            "truncation.csv",
            ["level", "chain_cap", "picard_levels", "picard_cone", "mean", "stderr", "change"],
            [
                [
                    j, lv.chain_cap, lv.picard_levels, lv.picard_cone,
                    means[j], stderrs[j], changes[j],
                ]
                for j, lv in enumerate(levels)
            ],
        )
        writer.write_json(
            "truncation.json",
            {
                "cap_value": analysis.cap_value,
                "replications": int(capped.shape[0]),
                "means": means,
                "stderrs": stderrs,
                "changes": steps,
                "decreasing": decreasing,
                "converged": bool(steps and steps[-1] < TRUNCATION_TOLERANCE),
            },
        )
        return []
