"""Experiment runner: sample -> lyapunov -> branches -> dimension -> verify."""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, Union

from pydantic import ValidationError

from app.branches import BranchService, USelector, slow_variation_check
from app.core.config import get_settings
from app.core.exceptions import ConfigError, InsufficientSamples, NonIntegrable, StageFailure
from app.core.projective import ProjectivePoint
from app.core.rng import stream
from app.dimension import DimensionEstimate, DimensionMethod, DimensionService, minoration_check, verify_theorem
from app.experiments import reports
from app.experiments.models import ExperimentConfig, ReportRecord, Stage
from app.lyapunov import LyapunovService
from app.maps import load_map
from app.maps.models import MapModel
from app.sampler import SamplerService

logger = logging.getLogger(__name__)
settings = get_settings()

CONFIGS_DIR = Path(__file__).resolve().parent / "configs"
MASS_CURVE_CENTERS = 20


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"Config not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e.msg} at line {e.lineno})")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(f"{path}: {'.'.join(str(p) for p in first['loc']) or 'config'}: {first['msg']}")


def bundled_configs() -> Dict[str, Path]:
    return {p.stem: p for p in sorted(CONFIGS_DIR.glob("*.json"))}


@contextmanager
def _stage(name: Stage, wall_times: Dict[str, float]) -> Iterator[None]:
    start = time.perf_counter()
    logger.info(f"stage {name.value}: start")
    try:
        yield
    except StageFailure:
        raise
    except Exception as e:
        logger.error(f"stage {name.value}: {type(e).__name__}: {getattr(e, 'detail', e)}")
        raise StageFailure(name.value, e) from e
    finally:
        wall_times[name.value] = round(time.perf_counter() - start, 3)
    logger.info(f"stage {name.value}: done in {wall_times[name.value]:.2f}s")


def _map_summary(fmap: MapModel) -> dict:
    return {
        "id": fmap.id,
        "kind": fmap.kind.value,
        "dimension": fmap.k,
        "degree": fmap.degree,
        "topological_degree": fmap.d_t,
        "dynamical_degrees": list(fmap.dyn_degrees),
        "description": fmap.description,
    }


def run_dir_for(config: ExperimentConfig, fmap: MapModel) -> Path:
    return Path(config.output_dir) if config.output_dir else Path(settings.OUTPUT_ROOT) / fmap.id


def run_experiment(config: ExperimentConfig) -> ReportRecord:
    """Run the configured stages in dependency order and write every artifact."""
    fmap = load_map(config.map)
    run_dir = run_dir_for(config, fmap)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Cannot create output directory {run_dir}: {e}")

    stages = config.ordered_stages
    workers = config.workers
    artifacts: Dict[str, str] = {}
    counters: Dict[str, int] = {}
    wall_times: Dict[str, float] = {}
    record = ReportRecord(
        map_id=fmap.id,
        map=_map_summary(fmap),
        config=config.model_dump(mode="json"),
        stages=[s.value for s in stages],
    )
    cloud = lyap = summary = None
    dims: Dict[DimensionMethod, DimensionEstimate] = {}

    if Stage.SAMPLE in stages:
        with _stage(Stage.SAMPLE, wall_times):
            if config.seed_point:
                seed = ProjectivePoint.from_pairs(config.seed_point)
            else:
                seed = SamplerService.random_generic_point(fmap, stream(config.rng_seed, "seed-point"))
            cloud = SamplerService.sample_backward_cloud(
                fmap, seed, config.depth, config.count, config.rng_seed, workers
            )
            check = SamplerService.verify_cloud(fmap, cloud)
            if not check.ok:
                logger.warning(f"{fmap.id}: forward-return error {check.max_error:.2e} above allowance")
            counters["cloud_discards"] = cloud.discards
            counters["cloud_check_failures"] = int(not check.ok)
            reports.write_cloud_csv(run_dir / "cloud.csv", cloud)
            artifacts["cloud"] = "cloud.csv"

    if Stage.LYAPUNOV in stages:
        with _stage(Stage.LYAPUNOV, wall_times):
            by_block = LyapunovService.exponent_spectrum_by_block(fmap, cloud, config.block_lengths, workers)
            lyap = by_block[config.main_block_length]
            jac_sum = LyapunovService.sum_exponents_from_jacobian(fmap, cloud)
            consistency = LyapunovService.sum_consistency_check(lyap, jac_sum)
            inequalities = LyapunovService.exponent_inequality_check(fmap, lyap)
            integrability = LyapunovService.log_integrability_check(fmap, cloud)
            counters["cocycle_discards"] = lyap.discards
            reports.write_json(
                run_dir / "lyapunov.json",
                {
                    "main_block_length": config.main_block_length,
                    "estimates": [by_block[n].model_dump(mode="json") for n in sorted(by_block)],
                    "jacobian_sum": jac_sum.model_dump(mode="json"),
                    "sum_consistency": consistency.model_dump(mode="json"),
                    "inequalities": inequalities.model_dump(mode="json"),
                    "log_integrability": integrability.model_dump(mode="json"),
                },
            )
            artifacts["lyapunov"] = "lyapunov.json"
            record.lyapunov = lyap.model_dump(mode="json") | {"sum_consistent": consistency.sum_consistent}
            record.exponent_inequalities = inequalities.model_dump(mode="json") | {"ok": inequalities.ok}

    if Stage.BRANCHES in stages and config.n_orbits > 0:
        with _stage(Stage.BRANCHES, wall_times):
            starts = SamplerService.sample_backward_cloud(
                fmap, cloud.seed_point, config.depth, config.n_orbits, config.rng_seed, workers, stage="orbit-starts"
            )
            orbits, redraws = SamplerService.sample_backward_orbits(
                fmap, starts.points, config.orbit_depth, config.rng_seed, workers
            )
            certs, summary = BranchService.certify_orbits(fmap, orbits, config.eps, lyap, workers)
            slow_by_ref = {}
            non_integrable = 0
            for orbit in orbits:
                try:
                    slow_by_ref[orbit.orbit_id] = slow_variation_check(fmap, orbit, USelector.DIST_TO_J, summary.eps)
                except NonIntegrable as e:
                    logger.warning(e.detail)
                    non_integrable += 1
            counters["orbit_redraws"] = redraws
            counters["certificate_truncations"] = sum(1 for c in certs if not c.fully_certified)
            counters["slow_variation_violations"] = sum(s.violations for s in slow_by_ref.values())
            counters["non_integrable_orbits"] = non_integrable

            reports.write_orbits_csv(run_dir / "orbits.csv", orbits, fmap.id, config.rng_seed)
            artifacts["orbits"] = "orbits.csv"
            rows = []
            for cert in certs:
                for rec in cert.schedule:
                    rows.append({"type": "depth", "orbit_ref": cert.orbit_ref, **rec.model_dump(mode="json", by_alias=True)})
                head = cert.model_dump(mode="json", exclude={"schedule"})
                if cert.orbit_ref in slow_by_ref:
                    head["slow_variation"] = slow_by_ref[cert.orbit_ref].model_dump(mode="json")
                rows.append({"type": "summary", **head})
            rows.append({"type": "certification_summary", **summary.model_dump(mode="json")})
            reports.write_jsonl(run_dir / "certificates.jsonl", rows)
            artifacts["certificates"] = "certificates.jsonl"
            record.certification = summary.model_dump(mode="json")

            if config.minoration:
                try:
                    report = minoration_check(fmap, cloud, orbits, certs, lyap, summary.eps)
                except InsufficientSamples as e:
                    logger.warning(e.detail)
                else:
                    reports.write_json(run_dir / "minoration.json", report.model_dump(mode="json"))
                    artifacts["minoration"] = "minoration.json"
                    record.minoration = {"ok": report.ok, "violations": report.violations, "sigma_hat": report.sigma_hat}

    if Stage.DIMENSION in stages:
        with _stage(Stage.DIMENSION, wall_times):
            schedule = config.radii or DimensionService.default_schedule(cloud)
            for method in config.dimension_methods:
                dims[method] = DimensionService.aggregate_dimension(cloud, config.n_centers, schedule, method)
            payload = []
            for method, est in dims.items():
                row = est.model_dump(mode="json", exclude={"local_dims"})
                row["local_dims_histogram"] = est.histogram()
                payload.append(row)
            reports.write_json(run_dir / "dimension.json", payload)
            artifacts["dimension"] = "dimension.json"
            centers = cloud.points[: min(MASS_CURVE_CENTERS, cloud.count)]
            curves = DimensionService.mass_curves(cloud, centers, schedule)
            reports.write_csv(
                run_dir / "mass_curves.csv",
                ["center", "log_rho", "log_mass"],
                [[i, repr(lr), repr(lm)] for i, lr, lm in curves],
            )
            artifacts["mass_curves"] = "mass_curves.csv"
            record.dimension = {m.value: est.dim_hat for m, est in dims.items()}
            values = list(record.dimension.values())
            record.cross_method_spread = max(values) - min(values) if len(values) > 1 else None

    if Stage.VERIFY in stages:
        with _stage(Stage.VERIFY, wall_times):
            primary = dims.get(DimensionMethod.LOCAL_SLOPE) or next(iter(dims.values()))
            rho_hat = summary.rho_max if summary is not None else 0.0
            verdict = verify_theorem(fmap, lyap, primary, rho_hat)
            reports.write_json(run_dir / "verdict.json", verdict.model_dump(mode="json"))
            artifacts["verdict"] = "verdict.json"
            record.verdict = verdict.model_dump(mode="json")

    record.artifacts = artifacts
    record.counters = counters
    record.wall_times = wall_times
    record.run_dir = str(run_dir)
    reports.write_json(run_dir / "record.json", reports.record_payload(record))
    reports.write_json(run_dir / "timings.json", wall_times)
    if record.passed is not None:
        logger.info(f"{fmap.id}: verdict {'PASS' if record.passed else 'FAIL'}")
    return record
