"""Job orchestration and report emission.

Executes the jobs of a :class:`RunConfig` in order and writes one CSV and/or
JSON artifact per job plus a manifest.  Files are written atomically (temp
file + rename) and contain no timestamps, so identical configurations yield
byte-identical bodies; the manifest holds the config hash, library versions
and the wall-clock time of the run.

Exit codes: 0 success, 1 numerical or I/O fault, 2 acceptance failure in a
selftest job.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ModelSpec, RunConfig, serialize_config
from .density import DensityJob, estimate_density
from .disintegration import disintegrate, support_check, verify_disintegration
from .expressions import ExpressionError, Num, parse_expression
from .functionals import BmEndpoint, Constant, Coordinate, Linear, Norm2, \
    NumericalFault
from .expressions import ExpressionFunctional
from .model import GaussianModel, build_model
from .surface import SurfaceMeasureHandle, hausdorff_compare, ibp_residuals, \
    surface_report


def resolve_model(spec: ModelSpec) -> GaussianModel:
    if spec.family == "explicit":
        return build_model({"spectrum": list(spec.spectrum)})
    return build_model((spec.family, spec.dim))


def resolve_functional(text: str, defs: dict, model: GaussianModel):
    """Turn a functional reference into an oracle: defined name, builtin,
    or inline expression."""
    text = text.strip()
    if text in defs:
        return _expression_functional(defs[text], name=text)
    if text == "norm2":
        return Norm2()
    if text == "bm_endpoint":
        return BmEndpoint(model)
    if text.startswith("coordinate(") and text.endswith(")"):
        return Coordinate(int(text[len("coordinate("):-1]))
    if text.startswith("linear(") and text.endswith(")"):
        weights = [float(p) for p in text[len("linear("):-1].split(",") if p.strip()]
        return Linear(weights)
    return _expression_functional(text)


def _expression_functional(source: str, name: str | None = None):
    parsed = parse_expression(source)
    if isinstance(parsed.ast, Num):
        return Constant(parsed.ast.value)
    return ExpressionFunctional(parsed, name=name)


# ----------------------------- formatting -----------------------------

def fmt(value) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_atomic(path: Path, data: str):
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(data)
    os.replace(tmp, path)


def write_csv(path: Path, header: list[str], rows: list[list]):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    write_atomic(path, "\n".join(lines) + "\n")


def write_json(path: Path, payload):
    write_atomic(path, json.dumps(_sanitize(payload), indent=2, sort_keys=True) + "\n")


def _curve_rows(curve):
    return [[float(r), float(e), float(s), curve.estimator, curve.excluded_fraction]
            for r, e, s in zip(curve.r, curve.estimates, curve.stderrs)]


def _curve_payload(curve):
    return {
        "r": curve.r, "estimates": curve.estimates, "stderrs": curve.stderrs,
        "estimator": curve.estimator, "excluded_fraction": curve.excluded_fraction,
        "n": curve.n, "seed": curve.seed, "epsilon": curve.epsilon,
        "window_counts": curve.window_counts, "flags": list(curve.flags),
    }


# ----------------------------- job executors -----------------------------

DENSITY_HEADER = ["r", "estimate", "stderr", "estimator", "excluded_fraction"]
RESIDUAL_HEADER = ["phi", "k", "r", "lhs", "rhs", "residual", "band"]


def _run_density(job, model, defs, out_base, formats):
    G = resolve_functional(job.G, defs, model)
    phi = resolve_functional(job.phi[0], defs, model)
    djob = DensityJob(model=model, G=G, phi=phi, r_grid=job.r_grid, n=job.n,
                      seed=job.seed, epsilon=job.epsilon, estimator=job.estimator)
    curves = estimate_density(djob)
    rows = []
    for key in ("divergence", "mollified"):
        if key in curves:
            rows.extend(_curve_rows(curves[key]))
    files = []
    if "csv" in formats:
        path = out_base.with_suffix(".csv")
        write_csv(path, DENSITY_HEADER, rows)
        files.append(path)
    if "json" in formats:
        path = out_base.with_suffix(".json")
        write_json(path, {"job": dataclasses.asdict(job),
                          "curves": {k: _curve_payload(c) for k, c in curves.items()}})
        files.append(path)
    return files


def _run_surface(job, model, defs, out_base, formats):
    G = resolve_functional(job.G, defs, model)
    phis = [resolve_functional(p, defs, model) for p in job.phi]
    estimator = job.estimator if job.estimator != "both" else "divergence"
    handle = SurfaceMeasureHandle(model=model, G=G, r=job.r, n=job.n,
                                  seed=job.seed, estimator=estimator,
                                  epsilon=job.epsilon)
    report = surface_report(handle, phis, k_list=job.k_list,
                            with_trace=job.trace, with_hausdorff=job.hausdorff)
    files = []
    if "csv" in formats:
        path = out_base.with_suffix(".csv")
        if report.ibp:
            rows = [[rec.phi_name, rec.k, rec.r, rec.lhs, rec.rhs, rec.residual,
                     rec.band] for rec in report.ibp]
            write_csv(path, RESIDUAL_HEADER, rows)
        else:
            rows = [["1", report.total_mass, report.total_mass_stderr]]
            rows += [[name, v, s] for name, (v, s) in report.integrals.items()]
            write_csv(path, ["phi", "value", "stderr"], rows)
        files.append(path)
    if "json" in formats:
        path = out_base.with_suffix(".json")
        payload = {
            "job": dataclasses.asdict(job),
            "r": report.r, "G": report.g_name, "estimator": report.estimator,
            "total_mass": report.total_mass,
            "total_mass_stderr": report.total_mass_stderr,
            "excluded_fraction": report.excluded_fraction,
            "integrals": report.integrals,
            "flags": list(report.flags),
            "ibp": [dataclasses.asdict(r) for r in report.ibp],
            "trace": dataclasses.asdict(report.trace) if report.trace else None,
            "hausdorff": dataclasses.asdict(report.hausdorff)
            if report.hausdorff else None,
        }
        write_json(path, payload)
        files.append(path)
    return files


def _run_ibp(job, model, defs, out_base, formats):
    G = resolve_functional(job.G, defs, model)
    estimator = job.estimator if job.estimator != "both" else "divergence"
    grid = job.r_grid if job.r_grid else (job.r,)
    records = []
    for phi_text in job.phi:
        phi = resolve_functional(phi_text, defs, model)
        for k in job.k_list:
            records.extend(ibp_residuals(model, G, phi, k, grid, job.n, job.seed,
                                         estimator=estimator, epsilon=job.epsilon))
    files = []
    if "csv" in formats:
        path = out_base.with_suffix(".csv")
        rows = [[rec.phi_name, rec.k, rec.r, rec.lhs, rec.rhs, rec.residual,
                 rec.band] for rec in records]
        write_csv(path, RESIDUAL_HEADER, rows)
        files.append(path)
    if "json" in formats:
        path = out_base.with_suffix(".json")
        write_json(path, {"job": dataclasses.asdict(job),
                          "records": [dataclasses.asdict(r) for r in records]})
        files.append(path)
    return files


def _run_disintegrate(job, model, defs, out_base, formats):
    G = resolve_functional(job.G, defs, model)
    D = disintegrate(model, G, job.n, job.seed, job.bins, scheme=job.scheme)
    phis = [resolve_functional(p, defs, model) for p in job.phi]
    cond = {p.name: D.conditional_means(D.evaluate(p)) for p in phis}
    towers = [verify_disintegration(D, p) for p in phis]
    support = support_check(D)
    files = []
    header = ["bin_lo", "bin_hi", "weight", "count"]
    header += [f"cond_mean_{name}" for name in cond]
    rows = []
    for j in range(D.bins):
        row = [float(D.edges[j]), float(D.edges[j + 1]), float(D.weights[j]),
               int(D.counts[j])]
        row += [float(cond[name][j]) if D.counts[j] else "" for name in cond]
        rows.append(row)
    if "csv" in formats:
        path = out_base.with_suffix(".csv")
        write_csv(path, header, rows)
        files.append(path)
    if "json" in formats:
        path = out_base.with_suffix(".json")
        payload = {
            "job": dataclasses.asdict(job),
            "edges": D.edges, "weights": D.weights, "counts": D.counts,
            "empty_bins": D.empty_bins,
            "tower": [dataclasses.asdict(t) | {"abs_error": t.abs_error,
                                               "rel_error": t.rel_error}
                      for t in towers],
            "support_max_excess": support.max_excess,
        }
        if job.dump_particles:
            payload["particles"] = {str(j): D.bin_indices(j) for j in range(D.bins)}
        write_json(path, payload)
        files.append(path)
    return files


def _run_hausdorff(job, model, defs, out_base, formats):
    G = resolve_functional(job.G, defs, model)
    phi = resolve_functional(job.phi[0], defs, model) if job.phi else Constant(1.0)
    estimator = job.estimator if job.estimator != "both" else "divergence"
    handle = SurfaceMeasureHandle(model=model, G=G, r=job.r, n=job.n,
                                  seed=job.seed, estimator=estimator,
                                  epsilon=job.epsilon)
    rec = hausdorff_compare(handle, phi)
    files = []
    if "csv" in formats:
        path = out_base.with_suffix(".csv")
        write_csv(path, ["G", "phi", "r", "geometry", "mc_value", "mc_stderr",
                         "quad_value", "rel_error"],
                  [[rec.g_name, rec.phi_name, rec.r, rec.geometry, rec.mc_value,
                    rec.mc_stderr, rec.quad_value, rec.rel_error]])
        files.append(path)
    if "json" in formats:
        path = out_base.with_suffix(".json")
        write_json(path, dataclasses.asdict(rec) | {
            "rel_error": rec.rel_error, "within_tolerance": rec.within_tolerance,
            "job": dataclasses.asdict(job)})
        files.append(path)
    return files


def _run_selftest(job, model, defs, out_base, formats):
    from .selftest import run_acceptance

    results = run_acceptance(verbose=True)
    path = out_base.with_suffix(".json")
    write_json(path, {"results": [dataclasses.asdict(r) for r in results]})
    failed = [r for r in results if not r.passed]
    return [path], not failed


_EXECUTORS = {
    "density": _run_density,
    "surface": _run_surface,
    "ibp": _run_ibp,
    "disintegrate": _run_disintegrate,
    "hausdorff": _run_hausdorff,
}


def run(config: RunConfig, output_dir=None) -> int:
    """Execute all jobs; returns the process exit code."""
    out = Path(output_dir if output_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    model = resolve_model(config.model)
    defs = dict(config.functionals)
    written: list[str] = []
    exit_code = 0
    for i, job in enumerate(config.jobs, 1):
        base = out / f"job{i:02d}_{job.kind}"
        try:
            if job.kind == "selftest":
                files, ok = _run_selftest(job, model, defs, base, config.formats)
                if not ok:
                    exit_code = 2
            else:
                files = _EXECUTORS[job.kind](job, model, defs, base, config.formats)
        except (NumericalFault, ExpressionError, ValueError, OSError) as e:
            print(f"job {i} ({job.kind}) failed: {e}", file=sys.stderr)
            return 1
        written.extend(str(f.name) for f in files)
    manifest = {
        "config_hash": hashlib.sha256(serialize_config(config).encode()).hexdigest(),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "versions": _versions(),
        "seeds": [job.seed for job in config.jobs],
        "files": written,
        "exit_code": exit_code,
    }
    write_json(out / "manifest.json", manifest)
    return exit_code


def _versions():
    import scipy

    from . import __version__

    return {"glset": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(map(str, sys.version_info[:3]))}


def run_text(text: str, output_dir=None) -> int:
    """Parse a config text and run it; config errors exit with code 1."""
    try:
        config = parse_config_text(text)
    except ConfigError as e:
        for issue in e.issues:
            print(str(issue), file=sys.stderr)
        return 1
    return run(config, output_dir)


def parse_config_text(text: str) -> RunConfig:
    from .config import parse_config

    return parse_config(text)
