"""Artifact writers and report rendering.

CSV headers (schema version 1):
  cloud.csv          chart,re_0,im_0,...,re_{k-1},im_{k-1}
  orbits.csv         orbit,depth_index,chart,re_0,im_0,...,residual
  mass_curves.csv    center,log_rho,log_mass
  lyapunov.csv       block_length,index,chi,stderr
  certificates.csv   orbit_ref,n,r_n,M_n_hat,alpha_n,lip_g,lip_f,jac_min,pass
  dimension.csv      method,dim_hat,ci_lo,ci_hi,n_centers,dropped
  verdict.csv        map_id,lower,dim_hat,upper,slack,pass_lower,pass_upper

Affine coordinates are written in the chart of the largest coordinate, which is
dropped. Floats use repr() so that files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

import numpy as np

from app.core.exceptions import ReportIOError
from app.core.projective import affine
from app.experiments.models import ReportFormat, ReportRecord
from app.sampler.models import BackwardOrbit, SampleCloud

logger = logging.getLogger(__name__)


def _num(value: float) -> str:
    return repr(float(value))


def _coord_header(k: int) -> List[str]:
    return [f"{part}_{i}" for i in range(k) for part in ("re", "im")]


def _affine_rows(points: np.ndarray) -> List[List[str]]:
    chart, coords = affine(points)
    rows = []
    for c, row in zip(chart, coords):
        values = [str(int(c))]
        for z in row:
            values += [_num(z.real), _num(z.imag)]
        rows.append(values)
    return rows


def _from_affine(chart: int, values: Sequence[float]) -> np.ndarray:
    coords = [complex(values[2 * i], values[2 * i + 1]) for i in range(len(values) // 2)]
    coords.insert(chart, 1.0 + 0.0j)
    return np.array(coords, dtype=complex)


def write_json(path: Path, payload: Any) -> Path:
    try:
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"Cannot write {path}: {e}")
    return path


def write_jsonl(path: Path, rows: Iterable[dict]) -> Path:
    try:
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    except OSError as e:
        raise ReportIOError(f"Cannot write {path}: {e}")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], comment: str = "") -> Path:
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise ReportIOError(f"Cannot write {path}: {e}")
    return path


# ----------------------------------------------------------------------
# sampler artifacts
# ----------------------------------------------------------------------


def write_cloud_csv(path: Path, cloud: SampleCloud) -> Path:
    seed = ";".join(f"{_num(re)}:{_num(im)}" for re, im in cloud.seed_point.to_pairs())
    comment = f"map_id={cloud.map_id},seed={seed},depth={cloud.depth},rng_seed={cloud.rng_seed}"
    return write_csv(path, ["chart"] + _coord_header(cloud.k), _affine_rows(cloud.points), comment)


def read_cloud_csv(path: Path) -> np.ndarray:
    """Points of a cloud CSV as normalized homogeneous coordinates."""
    try:
        with Path(path).open(encoding="utf-8") as fh:
            lines = [line for line in fh if not line.startswith("#")]
    except OSError as e:
        raise ReportIOError(f"Cannot read {path}: {e}")
    reader = csv.reader(lines)
    next(reader)
    return np.stack([_from_affine(int(row[0]), [float(v) for v in row[1:]]) for row in reader])


def write_orbits_csv(path: Path, orbits: Sequence[BackwardOrbit], map_id: str, rng_seed: int) -> Path:
    k = orbits[0].points.shape[1] - 1 if orbits else 1
    depth = orbits[0].depth if orbits else 0
    rows = []
    for orbit in orbits:
        residuals = np.concatenate([[0.0], orbit.residuals])
        for j, coords in enumerate(_affine_rows(orbit.points)):
            rows.append([str(orbit.index), str(j)] + coords + [_num(residuals[j])])
    header = ["orbit", "depth_index", "chart"] + _coord_header(k) + ["residual"]
    return write_csv(path, header, rows, f"map_id={map_id},depth={depth},rng_seed={rng_seed}")


# ----------------------------------------------------------------------
# records
# ----------------------------------------------------------------------


def record_payload(record: ReportRecord) -> dict:
    return record.model_dump(mode="json")


def load_record(path: Union[str, Path]) -> ReportRecord:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ReportIOError(f"Cannot read record {path}: {e}")
    record = ReportRecord.model_validate(raw)
    return record.model_copy(update={"run_dir": str(path.parent)})


def _read_artifact(record: ReportRecord, name: str) -> Any:
    if name not in record.artifacts or record.run_dir is None:
        return None
    path = Path(record.run_dir) / record.artifacts[name]
    try:
        if path.suffix == ".jsonl":
            return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ReportIOError(f"Cannot read {path}: {e}")


def csv_bundle(record: ReportRecord, out_dir: Path) -> List[Path]:
    """One CSV per completed stage, headers as documented in this module."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    lyap = _read_artifact(record, "lyapunov")
    if lyap:
        rows = []
        for est in lyap["estimates"]:
            for i, (chi, se) in enumerate(zip(est["chi"], est["stderr"])):
                rows.append([est["n_cocycle"], i + 1, _num(chi), _num(se)])
        written.append(write_csv(out_dir / "lyapunov.csv", ["block_length", "index", "chi", "stderr"], rows))
    certs = _read_artifact(record, "certificates")
    if certs:
        rows = [
            [r["orbit_ref"], r["n"], _num(r["r_n"]), _num(r["M_n_hat"]), _num(r["alpha_n"]),
             _num(r["lip_g"]), _num(r["lip_f"]), _num(r["jac_min"]), r["pass"]]
            for r in certs
            if r.get("type") == "depth"
        ]
        header = ["orbit_ref", "n", "r_n", "M_n_hat", "alpha_n", "lip_g", "lip_f", "jac_min", "pass"]
        written.append(write_csv(out_dir / "certificates.csv", header, rows))
    dims = _read_artifact(record, "dimension")
    if dims:
        rows = [
            [d["method"], _num(d["dim_hat"]), _num(d["ci"][0]), _num(d["ci"][1]), d["n_centers"], d["dropped"]]
            for d in dims
        ]
        written.append(write_csv(out_dir / "dimension.csv", ["method", "dim_hat", "ci_lo", "ci_hi", "n_centers", "dropped"], rows))
    if record.verdict:
        v = record.verdict
        row = [record.map_id, _num(v["lower"]), _num(v["dim_hat"]), _num(v["upper"]), _num(v["slack"]), v["pass_lower"], v["pass_upper"]]
        written.append(
            write_csv(out_dir / "verdict.csv", ["map_id", "lower", "dim_hat", "upper", "slack", "pass_lower", "pass_upper"], [row])
        )
    return written


def markdown_summary(records: Sequence[ReportRecord]) -> str:
    lines = ["# Dimension bounds", ""]
    lines.append("| map | k | d_t | lower | dim_hat | upper | slack | pass |")
    lines.append("|---|---|---|---|---|---|---|---|")
    for rec in records:
        meta = rec.map
        if rec.verdict:
            v = rec.verdict
            status = "pass" if rec.passed else "FAIL"
            lines.append(
                f"| {rec.map_id} | {meta.get('dimension')} | {meta.get('topological_degree')} | {v['lower']:.4f} | "
                f"{v['dim_hat']:.4f} | {v['upper']:.4f} | {v['slack']:.4f} | {status} |"
            )
        else:
            lines.append(
                f"| {rec.map_id} | {meta.get('dimension')} | {meta.get('topological_degree')} | - | - | - | - | - |"
            )
    lines.append("")
    for rec in records:
        lines.append(f"## {rec.map_id}")
        lines.append("")
        lines.append(f"- kind: {rec.map.get('kind')}, degree {rec.map.get('degree')}, "
                     f"dynamical degrees {rec.map.get('dynamical_degrees')}")
        if rec.map.get("description"):
            lines.append(f"- {rec.map['description']}")
        lines.append(f"- stages: {', '.join(rec.stages) if rec.stages else 'none'}")
        if rec.lyapunov:
            lines.append(f"- exponents: {rec.lyapunov['chi']}, sigma {rec.lyapunov['sigma']:.5f}")
        for method, value in rec.dimension.items():
            lines.append(f"- dimension ({method}): {value:.4f}")
        if rec.certification:
            c = rec.certification
            lines.append(f"- certified to full depth: {c['n_full_depth']}/{c['n_orbits']}")
        if "mass_curves" in rec.artifacts:
            lines.append(f"- plot data (log rho, log mass): `{rec.artifacts['mass_curves']}`")
        if rec.counters:
            lines.append("- counters: " + ", ".join(f"{k}={v}" for k, v in sorted(rec.counters.items())))
        lines.append("")
    return "\n".join(lines)


def emit_report(
    records: Union[ReportRecord, Sequence[ReportRecord]],
    fmt: Union[ReportFormat, str],
    out_dir: Union[str, Path],
) -> List[Path]:
    records = [records] if isinstance(records, ReportRecord) else list(records)
    fmt = ReportFormat(fmt)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportIOError(f"Cannot create {out_dir}: {e}")
    if fmt == ReportFormat.JSON:
        if len(records) == 1:
            return [write_json(out_dir / "record.json", record_payload(records[0]))]
        return [write_json(out_dir / "records.json", [record_payload(r) for r in records])]
    if fmt == ReportFormat.CSV_BUNDLE:
        paths: List[Path] = []
        for rec in records:
            target = out_dir if len(records) == 1 else out_dir / rec.map_id
            paths.extend(csv_bundle(rec, target))
        return paths
    path = out_dir / "summary.md"
    try:
        path.write_text(markdown_summary(records), encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"Cannot write {path}: {e}")
    logger.info(f"Wrote {path}")
    return [path]
