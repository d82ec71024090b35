"""Experiment cells, sweeps, persistence and scaling fits.

A cell samples one graph and runs any subset of the stages
``mix``, ``spectral``, ``flow``, ``cheeger`` and ``hit``, producing one
``ExperimentRecord``.  Every field except the ``wall_*`` timings is a
deterministic function of the configuration and the cell seed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import __version__
from .chain import ChainView, mixing_time
from .cut import cheeger_arcs
from .electric import hitting_time, region_split
from .flow import DEFAULT_ALPHA, congestion, flow_mixing_bound, flow_pipeline
from .model import ModelParams, _MASK64, _mix64, sample_graph
from .spectral import second_eigenvalue

STAGES = ("mix", "spectral", "flow", "cheeger", "hit")
FLOW_METRICS = {"rho", "delta_max", "gamma_prime_max_deg"}


@dataclass
class ExperimentRecord:
    n: int
    s: float
    beta: float
    seed: int
    alpha: float
    max_degree: int | None = None
    tau_est: int | None = None
    truncated: bool | None = None
    n_starts: int | None = None
    lambda2: float | None = None
    gap: float | None = None
    ds_bound: float | None = None
    rho: float | None = None
    delta_max: int | None = None
    gamma_prime_max_deg: int | None = None
    L: int | None = None
    k: int | None = None
    degraded_flag: bool | None = None
    cheeger_ratio: float | None = None
    cheeger_boundary: int | None = None
    tau_lower: float | None = None
    conductance: float | None = None
    hitting_T: float | None = None
    hitting_T_direct: float | None = None
    pi_AB: float | None = None
    errors: str = ""
    wall_sample: float | None = None
    wall_mix: float | None = None
    wall_spectral: float | None = None
    wall_flow: float | None = None
    wall_cheeger: float | None = None
    wall_hit: float | None = None

    def key(self):
        return (self.n, self.s, self.beta, self.seed)

    def without_timings(self) -> dict:
        return {k: v for k, v in asdict(self).items() if not k.startswith("wall_")}


RECORD_FIELDS = [f.name for f in fields(ExperimentRecord)]


def _field_kind(name):
    ann = ExperimentRecord.__dataclass_fields__[name].type
    for kind in ("bool", "int", "float", "str"):
        if ann.startswith(kind):
            return kind
    raise TypeError(name)


@dataclass
class RunConfig:
    n: int = 256
    s: float = 1.5
    beta: float = 1.0
    seed: int = 0
    alpha: float = DEFAULT_ALPHA
    stages: tuple = ()
    t_max: int | None = None
    eps: float = 0.25
    u: int | None = None
    strict_mod8: bool = False
    n_list: tuple = ()
    s_list: tuple = ()
    beta_list: tuple = ()
    replicates: int = 1
    output_path: str | None = None
    output_format: str = "csv"
    workers: int = 1

    def __post_init__(self):
        bad = set(self.stages) - set(STAGES)
        if bad:
            raise ValueError(f"unknown stages {sorted(bad)}; choose from {STAGES}")
        if self.output_format not in ("csv", "jsonl"):
            raise ValueError("output format must be csv or jsonl")


def derive_seed(run_seed: int, n: int, s_index: int, beta_index: int, replicate: int) -> int:
    """Cell seed; adding replicates or grid points never moves existing cells."""
    h = _mix64(run_seed & _MASK64)
    for part in (n, s_index, beta_index, replicate):
        h = _mix64((h ^ (part & _MASK64)) * 0x9E3779B97F4A7C15 & _MASK64)
    return h >> 1  # keep seeds within signed 64-bit range for csv tools


def run_cell(config: RunConfig, seed: int | None = None) -> ExperimentRecord:
    seed = config.seed if seed is None else seed
    params = ModelParams(config.n, config.s, config.beta, seed)
    rec = ExperimentRecord(n=config.n, s=config.s, beta=config.beta, seed=seed, alpha=config.alpha)
    errors = []

    t0 = time.perf_counter()
    graph = sample_graph(params)
    rec.max_degree = int(graph.degree.max())
    rec.wall_sample = time.perf_counter() - t0
    chain = ChainView(graph) if set(config.stages) & {"mix", "spectral", "flow"} else None

    def timed(stage, fn):
        t = time.perf_counter()
        try:
            fn()
        except Exception as exc:  # recorded, the cell carries on
            errors.append(f"{stage}: {type(exc).__name__}: {exc}")
        setattr(rec, f"wall_{stage}", time.perf_counter() - t)

    def do_mix():
        est = mixing_time(chain, t_max=config.t_max, eps=config.eps)
        rec.tau_est, rec.truncated, rec.n_starts = est.tau, est.truncated, len(est.per_start)

    def do_spectral():
        res = second_eigenvalue(chain)
        rec.lambda2, rec.gap = res.lambda2, res.gap
        rec.ds_bound = res.ds_bound if math.isfinite(res.ds_bound) else None

    def do_flow():
        plan = flow_pipeline(graph, alpha=config.alpha)
        diag = flow_mixing_bound(plan, chain, congestion(plan, chain))
        rec.rho, rec.delta_max = diag.rho, diag.delta_max
        rec.gamma_prime_max_deg, rec.L, rec.k = diag.gamma_prime_max_deg, diag.L, diag.k
        rec.degraded_flag = diag.degraded

    def do_cheeger():
        rep = cheeger_arcs(graph)
        rec.cheeger_ratio, rec.cheeger_boundary = rep.ratio, rep.boundary
        rec.tau_lower, rec.conductance = rep.tau_lower, rep.conductance

    def do_hit():
        split = region_split(config.n, strict=config.strict_mod8, u=config.u)
        rep = hitting_time(graph, split)
        rec.hitting_T, rec.hitting_T_direct, rec.pi_AB = rep.expected_T_visits, rep.expected_T_direct, rep.pi_AB

    actions = {"mix": do_mix, "spectral": do_spectral, "flow": do_flow, "cheeger": do_cheeger, "hit": do_hit}
    for stage in STAGES:
        if stage in config.stages:
            timed(stage, actions[stage])
    rec.errors = "; ".join(errors)
    return rec


def sweep_cells(config: RunConfig, run_seed: int | None = None) -> list[tuple[RunConfig, int]]:
    """Expand a scan into (cell config, cell seed) pairs, sorted by cell key."""
    run_seed = config.seed if run_seed is None else run_seed
    n_list = config.n_list or (config.n,)
    s_list = config.s_list or (config.s,)
    b_list = config.beta_list or (config.beta,)
    cells = []
    for n in n_list:
        for si, s in enumerate(s_list):
            for bi, beta in enumerate(b_list):
                for r in range(config.replicates):
                    cfg = replace(config, n=int(n), s=float(s), beta=float(beta), n_list=(), s_list=(), beta_list=(), replicates=1)
                    cells.append((cfg, derive_seed(run_seed, int(n), si, bi, r)))
    cells.sort(key=lambda c: (c[0].n, c[0].s, c[0].beta, c[1]))
    return cells


def _run_pair(pair):
    cfg, seed = pair
    return run_cell(cfg, seed)


def scan(config: RunConfig, run_seed: int | None = None) -> list[ExperimentRecord]:
    cells = sweep_cells(config, run_seed)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_pair, cells))
    else:
        records = [_run_pair(c) for c in cells]
    return sorted(records, key=ExperimentRecord.key)


# ---------------------------------------------------------------- fitting


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_values: list
    medians: list
    metric: str
    aggregation: str = "median-per-n"

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi


def _usable(rec, metric):
    val = getattr(rec, metric)
    if val is None or not math.isfinite(val) or val <= 0:
        return False
    if rec.truncated:
        return False
    if metric in FLOW_METRICS and rec.degraded_flag:
        return False
    return True


def fit_exponent(records, metric: str, min_seeds: int = 3) -> FitResult:
    """OLS of log(median metric per n) against log n."""
    groups = {}
    for rec in records:
        if _usable(rec, metric):
            groups.setdefault(rec.n, []).append(float(getattr(rec, metric)))
    ns = sorted(n for n, vals in groups.items() if len(vals) >= min_seeds)
    if len(ns) < 3:
        raise ValueError(f"need >= 3 values of n with >= {min_seeds} usable records each, got {len(ns)}")
    med = [float(np.median(groups[n])) for n in ns]
    x, y = np.log(ns), np.log(med)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(((y - pred) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), r2, ns, med, metric)


def degree_tail_check(records, min_records: int = 20) -> float:
    """Fraction of records whose max degree is at most 2 log n."""
    keys = {(r.n, r.s, r.beta) for r in records}
    if len(keys) != 1:
        raise ValueError("degree tail check needs records at a single (n, s, beta)")
    if len(records) < min_records:
        raise ValueError(f"need >= {min_records} records, got {len(records)}")
    n = records[0].n
    return sum(r.max_degree <= 2 * math.log(n) for r in records) / len(records)


# ---------------------------------------------------------------- persistence


def _fmt(value, kind):
    if value is None:
        return ""
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return format(float(value), ".17g")
    return str(value)


def _parse(text, kind):
    if kind == "str":
        return text
    if text == "":
        return None
    if kind == "bool":
        return text == "true"
    if kind == "int":
        return int(text)
    return float(text)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    kinds = [_field_kind(f) for f in RECORD_FIELDS]
    for r in records:
        w.writerow([_fmt(getattr(r, f), k) for f, k in zip(RECORD_FIELDS, kinds)])
    return buf.getvalue()


def records_from_csv(text: str) -> list[ExperimentRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if header != RECORD_FIELDS:
        raise ValueError("CSV header does not match the record schema")
    kinds = [_field_kind(f) for f in header]
    return [ExperimentRecord(**{f: _parse(v, k) for f, v, k in zip(header, row, kinds)}) for row in body]


def records_to_jsonl(records) -> str:
    lines = []
    for r in records:
        obj = {}
        for f in RECORD_FIELDS:
            v = getattr(r, f)
            obj[f] = None if v is None else (float(v) if _field_kind(f) == "float" else v)
        lines.append(json.dumps(obj))
    return "\n".join(lines) + ("\n" if lines else "")


def records_from_jsonl(text: str) -> list[ExperimentRecord]:
    return [ExperimentRecord(**json.loads(ln)) for ln in text.splitlines() if ln.strip()]


def write_records(records, path, fmt: str = "csv") -> None:
    text = records_to_csv(records) if fmt == "csv" else records_to_jsonl(records)
    with open(path, "w") as fh:
        fh.write(text)


def read_records(path) -> list[ExperimentRecord]:
    with open(path) as fh:
        text = fh.read()
    if str(path).endswith(".jsonl") or text.lstrip().startswith("{"):
        return records_from_jsonl(text)
    return records_from_csv(text)


def make_manifest(config: RunConfig, run_seed: int | None = None) -> dict:
    cells = sweep_cells(config, run_seed)
    cfg = asdict(config)
    for key in ("stages", "n_list", "s_list", "beta_list"):
        cfg[key] = list(cfg[key])
    return {
        "toolkit": "lrpmix",
        "version": __version__,
        "run_seed": config.seed if run_seed is None else run_seed,
        "config": cfg,
        "cells": [{"n": c.n, "s": c.s, "beta": c.beta, "seed": sd} for c, sd in cells],
    }


def rerun_manifest(manifest: dict) -> list[ExperimentRecord]:
    cfg = dict(manifest["config"])
    for key in ("stages", "n_list", "s_list", "beta_list"):
        cfg[key] = tuple(cfg[key])
    base = RunConfig(**cfg)
    out = []
    for cell in manifest["cells"]:
        c = replace(base, n=cell["n"], s=cell["s"], beta=cell["beta"], n_list=(), s_list=(), beta_list=(), replicates=1)
        out.append(run_cell(c, cell["seed"]))
    return sorted(out, key=ExperimentRecord.key)


# ---------------------------------------------------------------- config file

_CONFIG_KEYS = {
    "model.n": ("n", int),
    "model.s": ("s", float),
    "model.beta": ("beta", float),
    "model.seed": ("seed", int),
    "flow.alpha": ("alpha", float),
    "run.stages": ("stages", lambda v: tuple(x.strip() for x in v.split(",") if x.strip())),
    "run.t_max": ("t_max", int),
    "run.eps": ("eps", float),
    "run.workers": ("workers", int),
    "scan.n_list": ("n_list", lambda v: tuple(int(x) for x in v.split(",") if x.strip())),
    "scan.s_list": ("s_list", lambda v: tuple(float(x) for x in v.split(",") if x.strip())),
    "scan.beta_list": ("beta_list", lambda v: tuple(float(x) for x in v.split(",") if x.strip())),
    "scan.replicates": ("replicates", int),
    "output.path": ("output_path", str),
    "output.format": ("output_format", str),
}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        name, conv = _CONFIG_KEYS[key]
        out[name] = conv(value)
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def summary_line(rec: ExperimentRecord) -> str:
    shown = {k: v for k, v in rec.without_timings().items() if v not in (None, "")}
    return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in shown.items())


__all__ = [
    "ExperimentRecord", "RunConfig", "FitResult", "STAGES", "derive_seed", "run_cell", "scan", "sweep_cells",
    "fit_exponent", "degree_tail_check", "records_to_csv", "records_from_csv", "records_to_jsonl",
    "records_from_jsonl", "write_records", "read_records", "make_manifest", "rerun_manifest",
    "parse_config_text", "load_config", "summary_line",
]
