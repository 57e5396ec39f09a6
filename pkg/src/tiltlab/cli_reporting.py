"""Config ingestion, experiment orchestration and report emission."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, catalog
from .criticality import ACCEPT_TOL, classify_critical_point, enumerate_critical_points
from .errors import ConfigError, TiltlabError
from .fenchel_duality import solve_primal_dual
from .function_algebra import FunctionExpr, Polynomial, parse_function
from .genericity_lab import (
    ALL_PROPERTIES, CompositeSpec, PerturbationSample, SamplingConfig, build_selection_atlas,
    default_jobs, evaluate_tilt_sample, run_genericity_experiment, sample_perturbations,
)
from .polynomials import Poly, SmoothMap

DEFAULT_TOLERANCES = {"tol": 1e-9, "residual": 1e-8, "gap": 1e-8}
DEFAULT_FORMATS = ("json", "csv")
MODES = ("tilt_sweep", "composite_sweep", "atlas", "duality", "single_point")


# canonical serialization

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if hasattr(obj, "to_json"):
        return _plain(obj.to_json())
    return obj


def _num(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"+inf"' if x > 0 else '"-inf"'
    if x == 0.0:
        return "0"  # folds -0.0
    return "%.17g" % x


def _dump(obj, out: list, indent: int, level: int):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_num(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        out.append("[")
        for i, v in enumerate(obj):
            out.append(("," if i else "") + pad)
            _dump(v, out, indent, level + 1)
        out.append(end + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, k in enumerate(sorted(obj)):
            out.append(("," if i else "") + pad + json.dumps(k, ensure_ascii=False) + ": ")
            _dump(obj[k], out, indent, level + 1)
        out.append(end + "}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj, indent: int = 1) -> str:
    """Sorted keys, floats as %.17g, infinities as the strings "+inf"/"-inf"."""
    out: list = []
    _dump(_plain(obj), out, indent, 0)
    return "".join(out) + "\n"


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw, indent=0).encode()).hexdigest()


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return _num(float(x)).strip('"')
    return str(x)


def write_csv(path: Path, header: list, rows: list) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(c) for c in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


# config

@dataclass
class ExperimentConfig:
    problem: dict
    mode: str
    sampling: SamplingConfig | None
    tolerances: dict
    directory: Path
    formats: tuple
    properties: tuple
    raw: dict
    base_dir: Path = Path(".")

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def seed(self) -> int:
        return self.sampling.master_seed if self.sampling else int(self.raw.get("sampling", {}).get("master_seed", 0))


def _schema() -> dict:
    return json.loads(resources.files("tiltlab").joinpath("schemas/config.schema.json").read_text())


def _pointer(err) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def _best_message(err) -> str:
    # oneOf failures hide the useful branch error in context
    if err.context:
        inner = max(err.context, key=lambda e: len(e.absolute_path))
        return inner.message
    return err.message


def validate_config(doc) -> list:
    v = jsonschema.Draft202012Validator(_schema())
    errs = sorted(v.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [(_pointer(e), _best_message(e)) for e in errs]


def config_from_dict(doc: dict, base_dir: Path = Path("."), mode: str | None = None) -> ExperimentConfig:
    violations = validate_config(doc)
    if violations:
        lines = "; ".join(f"{p}: {m}" for p, m in violations)
        raise ConfigError(f"config violates the schema: {lines}", violations)
    cfg_mode = doc.get("mode", mode)
    if cfg_mode is None:
        raise ConfigError("no mode given", [("/mode", "required when the subcommand does not imply it")])
    if mode is not None and doc.get("mode") not in (None, mode):
        raise ConfigError(f"config mode {doc['mode']!r} does not match the subcommand ({mode})",
                          [("/mode", "mismatch")])
    samp = None
    if "sampling" in doc:
        s = doc["sampling"]
        try:
            samp = SamplingConfig(box=s["box"], count=s.get("count"), grid_nodes=s.get("grid_nodes"),
                                  master_seed=s.get("master_seed", 0), y_box=s.get("y_box"),
                                  exclude_v_radius=s.get("exclude_v_radius", 0.0))
        except ValueError as exc:
            raise ConfigError(str(exc), [("/sampling", str(exc))]) from exc
    elif cfg_mode in ("tilt_sweep", "composite_sweep", "atlas"):
        raise ConfigError(f"mode {cfg_mode} needs a sampling block", [("/sampling", "required")])
    if cfg_mode == "atlas" and samp is not None and samp.grid_nodes is None:
        raise ConfigError("atlas mode needs sampling.grid_nodes", [("/sampling/grid_nodes", "required")])
    if cfg_mode == "composite_sweep" and "G" not in doc["problem"]:
        raise ConfigError("composite_sweep needs problem.G", [("/problem/G", "required")])
    if cfg_mode in ("composite_sweep", "duality") and "h" not in doc["problem"]:
        raise ConfigError(f"{cfg_mode} needs problem.h", [("/problem/h", "required")])
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(doc.get("tolerances", {}))
    out = doc.get("output", {})
    return ExperimentConfig(
        problem=doc["problem"], mode=cfg_mode, sampling=samp, tolerances=tol,
        directory=Path(out.get("directory", "tiltlab-out")),
        formats=tuple(out.get("formats", DEFAULT_FORMATS)),
        properties=tuple(doc.get("properties", ALL_PROPERTIES)),
        raw=doc, base_dir=base_dir)


def load_config(path, mode: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", [("", str(exc))]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        msg = f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        raise ConfigError(msg, [("", msg)]) from exc
    return config_from_dict(doc, path.parent, mode)


def apply_overrides(cfg: ExperimentConfig, seed=None, tol=None) -> ExperimentConfig:
    if seed is not None:
        if cfg.sampling is not None:
            cfg.sampling.master_seed = int(seed)
        cfg.raw = {**cfg.raw, "sampling": {**cfg.raw.get("sampling", {}), "master_seed": int(seed)}} \
            if "sampling" in cfg.raw else cfg.raw
    if tol is not None:
        cfg.tolerances["tol"] = float(tol)
        cfg.raw = {**cfg.raw, "tolerances": {**cfg.raw.get("tolerances", {}), "tol": float(tol)}}
    return cfg


def resolve_function(ref: dict, base_dir: Path, where: str) -> FunctionExpr:
    if "catalog" in ref:
        try:
            return catalog.get(ref["catalog"])
        except KeyError as exc:
            raise ConfigError(str(exc), [(where + "/catalog", "unknown catalog name")]) from None
    if "path" in ref:
        p = Path(ref["path"])
        p = p if p.is_absolute() else base_dir / p
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{where}: cannot load {p}: {exc}", [(where + "/path", str(exc))]) from exc
        return _parse(doc, where)
    return _parse(ref, where)


def _parse(doc, where):
    try:
        return parse_function(doc, path=where)
    except TiltlabError as exc:
        raise ConfigError(str(exc), [(where, str(exc))]) from exc


# runs

@dataclass
class RunRecord:
    config_hash: str
    code_version: str
    mode: str
    seed: int
    started: str
    finished: str
    reports: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    invariant_violations: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.invariant_violations else 0

    def to_json(self):
        return {"config_hash": self.config_hash, "code_version": self.code_version, "mode": self.mode,
                "seed": self.seed, "started": self.started, "finished": self.finished,
                "reports": self.reports, "errors": self.errors,
                "invariant_violations": self.invariant_violations, "summary": self.summary,
                "exit_code": self.exit_code}


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins timestamps for reproducible run records
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class Report:
    """One mode's output: a JSON document plus named CSV tables (header, rows)."""

    name: str
    document: dict
    tables: dict
    errors: list
    violations: list
    summary: dict


def _vec(x, n):
    return np.asarray(x, float).reshape(n) if x is not None else np.zeros(n)


def _sample_errors(recs):
    out = []
    for r in recs:
        for e in r.get("errors", []):
            out.append({"index": r["sample"]["index"], "error": e})
    return out


def _point_violations(rows, where, tol):
    out = []
    for r in rows:
        if r.get("residual") is not None and r["residual"] > max(tol, ACCEPT_TOL):
            out.append(f"{where}: accepted critical point {r['x']} has residual {r['residual']:.3g}")
    return out


def _tilt_tables(recs, props):
    n = len(recs[0]["sample"]["v"]) if recs else 1
    cols = [p for p in ("strict_complementarity", "prox_regular", "identification", "manifold_dim",
                        "strongly_regular", "lipschitz_estimate", "stable_growth", "alpha", "equivalence")
            if p in props or p in ("manifold_dim", "lipschitz_estimate", "alpha")]
    header = ["index"] + [f"v{i}" for i in range(n)] + ["critical_count", "point"] + \
        [f"x{i}" for i in range(n)] + ["value", "residual", "isolated"] + cols + ["sample_failed"]
    rows = []
    for r in recs:
        v = r["sample"]["v"]
        pts = r.get("points") or [None]
        for k, p in enumerate(pts):
            base = [r["sample"]["index"]] + v + [r.get("critical_count")]
            if p is None:
                rows.append(base + [None] * (1 + n + 3 + len(cols)) + [r["failed"]])
            else:
                rows.append(base + [k] + p["x"] + [p["value"], p["residual"], p["isolated"]] +
                            [p.get(c) for c in cols] + [r["failed"]])
    return {"samples": (header, rows)}


def _run_tilt_sweep(cfg, f, jobs):
    rep = run_genericity_experiment(f, cfg.sampling, cfg.properties, jobs=jobs)
    doc = rep.to_json()
    viol = []
    for r in rep.samples:
        viol += _point_violations(r.get("points", []), f"sample {r['sample']['index']}", cfg.tolerances["residual"])
    return Report("tilt_sweep", doc, _tilt_tables(rep.samples, cfg.properties), _sample_errors(rep.samples), viol,
                  {"samples": len(rep.samples), "N_max": rep.N_max, "failures": len(rep.failure_set),
                   "failure_fraction": rep.failure_fraction})


def _composite_parts(cfg):
    P = cfg.problem
    f = resolve_function(P["f"], cfg.base_dir, "/problem/f")
    h = resolve_function(P["h"], cfg.base_dir, "/problem/h")
    try:
        G = SmoothMap.from_json(P["G"])
    except (KeyError, TypeError, TiltlabError) as exc:
        raise ConfigError(f"/problem/G: {exc}", [("/problem/G", str(exc))]) from exc
    if G.n != f.n or G.m != h.n:
        raise ConfigError("dimension mismatch between f, G and h", [("/problem/G", "dimension mismatch")])
    return f, h, G


def _run_composite_sweep(cfg, jobs):
    f, h, G = _composite_parts(cfg)
    starts = tuple(tuple(s) for s in cfg.problem.get("starts", CompositeSpec.__dataclass_fields__["starts"].default))
    spec = CompositeSpec(f, h, G, starts)
    rep = run_genericity_experiment(spec, cfg.sampling, jobs=jobs)
    tol = cfg.tolerances["residual"]
    viol = []
    rows = []
    n, m = G.n, G.m
    for r in rep.samples:
        s = r["sample"]
        res = r.get("residuals")
        if r.get("status") == "CONVERGED" and res is not None and max(res) > tol:
            viol.append(f"sample {s['index']}: converged pair with residual {max(res):.3g} > {tol:g}")
        q = r.get("qual_flags") or {}
        rows.append([s["index"]] + s["v"] + (s["y"] or [0.0] * m) + [r.get("status")] +
                    (r.get("x") or [None] * n) + (r.get("lambda") or [None] * m) +
                    [None if res is None else max(res), r.get("strict_complementarity"), q.get("bcq"),
                     q.get("licq_analogue"), r.get("multiplier_unique"), r["failed"]])
    header = ["index"] + [f"v{i}" for i in range(n)] + [f"y{i}" for i in range(m)] + ["status"] + \
        [f"x{i}" for i in range(n)] + [f"lam{i}" for i in range(m)] + \
        ["residual", "strict_complementarity", "bcq", "licq_analogue", "multiplier_unique", "sample_failed"]
    return Report("composite_sweep", rep.to_json(), {"samples": (header, rows)}, _sample_errors(rep.samples), viol,
                  {"samples": len(rep.samples), "N_max": rep.N_max, "failures": len(rep.failure_set),
                   "failure_fraction": rep.failure_fraction})


def _run_atlas(cfg, f, jobs):
    s = cfg.sampling
    axes = [np.linspace(a, b, s.grid_nodes) for a, b in s.box]
    atlas = build_selection_atlas(f, axes, jobs=jobs)
    n = len(axes)
    header = ["node"] + [f"v{i}" for i in range(n)] + ["branch"] + [f"x{i}" for i in range(f.n)]
    nodes = atlas.nodes
    card = atlas.cardinality.reshape(-1)
    card_rows = [[k] + nodes[k].tolist() + [int(card[k])] for k in range(len(card))]
    tables = {"branches": (header, atlas.branch_rows()),
              "cardinality": (["node"] + [f"v{i}" for i in range(n)] + ["cardinality"], card_rows)}
    viol = []
    if atlas.N_max < 0:
        viol.append("atlas found no finite cardinality")
    return Report("atlas", atlas.to_json(), tables, [], viol,
                  {"nodes": int(card.size), "N_max": atlas.N_max,
                   "transition_values": atlas.transition_values, "separated": atlas.separated})


def _run_duality(cfg, jobs):
    P = cfg.problem
    f = resolve_function(P["f"], cfg.base_dir, "/problem/f")
    h = resolve_function(P["h"], cfg.base_dir, "/problem/h")
    A = np.asarray(P.get("A", np.eye(f.n).tolist()), float)
    if A.shape != (h.n, f.n):
        raise ConfigError("A must be (dim h) x (dim f)", [("/problem/A", f"shape {A.shape}")])
    m, n = A.shape
    if cfg.sampling is not None:
        if len(cfg.sampling.box) != n or (cfg.sampling.y_box is not None and len(cfg.sampling.y_box) != m):
            raise ConfigError("sampling boxes do not match the problem dimensions", [("/sampling", "dimension")])
        samples = sample_perturbations(cfg.sampling)
    else:
        samples = [PerturbationSample(_vec(P.get("v"), n), _vec(P.get("y"), m), 0, 0)]
    gap_tol = cfg.tolerances["gap"]
    recs, errors, viol, rows = [], [], [], []
    for s in samples:
        y = s.y if s.y is not None else np.zeros(m)
        rec = {"sample": s.to_json()}
        try:
            cert = solve_primal_dual(f, h, A, s.v, y)
            rec["certificate"] = cert.to_json()
            feas = cert.feasibility
            if cert.gap < -1e-9:
                viol.append(f"sample {s.index}: negative duality gap {cert.gap:.3g}")
            elif (cert.status == "CONVERGED" and feas["y_interior"] and feas["v_interior"]
                  and cert.gap > gap_tol):
                viol.append(f"sample {s.index}: gap {cert.gap:.3g} at interior parameters")
            rows.append([s.index] + s.v.tolist() + y.tolist() + [cert.status] + cert.x.tolist() + cert.u.tolist() +
                        [cert.primal_value, cert.dual_value, cert.gap, feas["y_interior"], feas["v_interior"],
                         cert.complementarity])
        except TiltlabError as exc:
            rec["error"] = str(exc)
            errors.append({"index": s.index, "error": str(exc)})
            rows.append([s.index] + s.v.tolist() + y.tolist() + ["ERROR"] + [None] * (n + m + 6))
        recs.append(rec)
    header = ["index"] + [f"v{i}" for i in range(n)] + [f"y{i}" for i in range(m)] + ["status"] + \
        [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)] + \
        ["primal_value", "dual_value", "gap", "y_interior", "v_interior", "complementarity"]
    gaps = [r["certificate"]["gap"] for r in recs if "certificate" in r]
    doc = {"kind": "duality_report", "samples": recs, "A": A, "primal": f.to_json(), "h": h.to_json()}
    return Report("duality", doc, {"certificates": (header, rows)}, errors, viol,
                  {"samples": len(recs), "max_gap": max(gaps, default=None), "errors": len(errors)})


def _run_single_point(cfg, f):
    v = _vec(cfg.problem.get("v"), f.n)
    sample = PerturbationSample(v, None, int(cfg.seed), 0)
    rec = evaluate_tilt_sample(f, sample, cfg.properties)
    for p in rec["points"]:
        try:
            p["classification"] = classify_critical_point(f, v, p["x"], seed=int(cfg.seed))
        except TiltlabError as exc:
            rec["errors"].append(f"classification: {exc}")
    viol = _point_violations(rec["points"], "point", cfg.tolerances["residual"])
    tables = _tilt_tables([rec], cfg.properties)
    header, rows = tables["samples"]
    header = header + ["classification"]
    rows = [r + [rec["points"][r[len(v) + 2]]["classification"] if rec["points"] else None] for r in rows]
    doc = {"kind": "single_point_report", "v": v, "function": f.to_json(), **rec}
    return Report("single_point", doc, {"points": (header, rows)}, _sample_errors([rec]), viol,
                  {"critical_count": rec.get("critical_count"), "failed": rec["failed"]})


def build_report(cfg: ExperimentConfig, jobs: int | None = None) -> Report:
    jobs = default_jobs() if jobs is None else jobs
    if cfg.mode == "composite_sweep":
        return _run_composite_sweep(cfg, jobs)
    if cfg.mode == "duality":
        return _run_duality(cfg, jobs)
    f = resolve_function(cfg.problem["f"], cfg.base_dir, "/problem/f")
    if cfg.sampling is not None and len(cfg.sampling.box) != f.n and cfg.mode != "single_point":
        raise ConfigError(f"sampling box has {len(cfg.sampling.box)} axes, function lives in R^{f.n}",
                          [("/sampling/box", "dimension mismatch")])
    if cfg.mode == "tilt_sweep":
        return _run_tilt_sweep(cfg, f, jobs)
    if cfg.mode == "atlas":
        return _run_atlas(cfg, f, jobs)
    return _run_single_point(cfg, f)


def emit_report(report: Report, formats, directory) -> list:
    """Write report.json and/or one CSV per table; returns the written paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    if "json" in formats:
        p = d / f"{report.name}.json"
        p.write_text(canonical_json(report.document), encoding="utf-8")
        paths.append(p)
    if "csv" in formats:
        for name in sorted(report.tables):
            header, rows = report.tables[name]
            p = d / f"{report.name}_{name}.csv"
            write_csv(p, header, rows)
            paths.append(p)
    return paths


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None) -> RunRecord:
    started = _timestamp()
    report = build_report(cfg, jobs)
    paths = emit_report(report, cfg.formats, cfg.directory)
    rec = RunRecord(cfg.hash, __version__, cfg.mode, int(cfg.seed), started, _timestamp(),
                    [p.name for p in paths], report.errors, report.violations, report.summary)
    (Path(cfg.directory) / "run.json").write_text(canonical_json(rec), encoding="utf-8")
    (Path(cfg.directory) / "config.json").write_text(canonical_json(cfg.raw), encoding="utf-8")
    return rec


def summarize_run(run_dir) -> tuple[str, int]:
    """Human-readable summary of a finished run directory and its recorded exit code."""
    d = Path(run_dir)
    try:
        rec = json.loads((d / "run.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{d} is not a run directory: {exc}", [("", str(exc))]) from exc
    lines = [f"mode: {rec['mode']}", f"config hash: {rec['config_hash']}",
             f"code version: {rec['code_version']}", f"seed: {rec['seed']}",
             f"started: {rec['started']}  finished: {rec['finished']}"]
    for k in sorted(rec["summary"]):
        lines.append(f"{k}: {rec['summary'][k]}")
    lines.append(f"reports: {', '.join(rec['reports']) or '(none)'}")
    missing = [r for r in rec["reports"] if not (d / r).exists()]
    if missing:
        lines.append(f"missing report files: {', '.join(missing)}")
    lines.append(f"per-sample errors: {len(rec['errors'])}")
    lines.append(f"invariant violations: {len(rec['invariant_violations'])}")
    for v in rec["invariant_violations"][:20]:
        lines.append(f"  {v}")
    code = int(rec.get("exit_code", 0))
    return "\n".join(lines), (1 if missing else code)


def zero_function(n: int) -> FunctionExpr:
    return Polynomial(Poly(n))
