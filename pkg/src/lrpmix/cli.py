"""Command line entry point: ``lrpmix <command> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace

from . import harness
from .model import ModelParams, dumps, sample_graph

STAGE_OF = {"mix": "mix", "spectral": "spectral", "flow": "flow", "cheeger": "cheeger", "hit": "hit"}


def _shared(p):
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of replicate cells")
    p.add_argument("--alpha", type=float)
    p.add_argument("--t-max", type=int, dest="t_max")
    p.add_argument("--eps", type=float)
    p.add_argument("--u", type=int, help="override the hitting-time probe vertex")
    p.add_argument("--out", dest="output_path")
    p.add_argument("--format", dest="output_format", choices=("csv", "jsonl"))
    p.add_argument("--strict-mod8", action="store_true", default=None, dest="strict_mod8")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrpmix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a graph and print it in line format")
    _shared(p)
    for name in ("mix", "spectral", "flow", "cheeger", "hit"):
        _shared(sub.add_parser(name, help=f"run the {name} stage"))

    p = sub.add_parser("scan", help="sweep n (and optionally s, beta) over replicates")
    _shared(p)
    p.add_argument("--n-list", help="comma separated n values")
    p.add_argument("--s-list", help="comma separated s values")
    p.add_argument("--beta-list", help="comma separated beta values")
    p.add_argument("--stages", help=f"comma separated subset of {','.join(harness.STAGES)}")
    p.add_argument("--manifest", help="write the run manifest here")
    p.add_argument("--rerun", help="reproduce the records of an existing manifest")

    p = sub.add_parser("fit", help="fit log(median metric) against log n")
    p.add_argument("records", help="csv or jsonl records file")
    p.add_argument("--metric", default="tau_est")
    p.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"))
    return parser


def _config(args) -> harness.RunConfig:
    values = harness.load_config(args.config) if args.config else {}
    for key in ("n", "s", "beta", "seed", "alpha", "t_max", "eps", "u", "output_path", "output_format", "strict_mod8", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "seeds", None):
        values["replicates"] = args.seeds
    for key, conv in (("n_list", int), ("s_list", float), ("beta_list", float)):
        raw = getattr(args, key, None)
        if raw:
            values[key] = tuple(conv(x) for x in raw.split(","))
    if getattr(args, "stages", None):
        values["stages"] = tuple(x for x in args.stages.split(",") if x)
    return harness.RunConfig(**values)


def _emit(records, cfg):
    if cfg.output_path:
        harness.write_records(records, cfg.output_path, cfg.output_format)
    else:
        text = harness.records_to_csv(records) if cfg.output_format == "csv" else harness.records_to_jsonl(records)
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "fit":
        fit = harness.fit_exponent(harness.read_records(args.records), args.metric)
        out = asdict(fit)
        if args.window:
            out["pass"] = fit.within(*args.window)
        print(json.dumps(out, indent=2))
        return 0 if out.get("pass", True) else 1

    cfg = _config(args)

    if args.command == "sample":
        g = sample_graph(ModelParams(cfg.n, cfg.s, cfg.beta, cfg.seed))
        text = dumps(g)
        if cfg.output_path:
            with open(cfg.output_path, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0

    if args.command == "scan":
        if args.rerun:
            with open(args.rerun) as fh:
                records = harness.rerun_manifest(json.load(fh))
        else:
            if not cfg.n_list:
                cfg = replace(cfg, n_list=(cfg.n,))
            records = harness.scan(cfg)
            if args.manifest:
                with open(args.manifest, "w") as fh:
                    json.dump(harness.make_manifest(cfg), fh, indent=2)
        _emit(records, cfg)
        return 0

    cfg = replace(cfg, stages=(STAGE_OF[args.command],))
    if cfg.replicates > 1:
        records = harness.scan(cfg)
    else:
        records = [harness.run_cell(cfg)]
    _emit(records, cfg)
    for rec in records:
        if rec.errors:
            print(rec.errors, file=sys.stderr)
    return 1 if any(r.errors for r in records) else 0


if __name__ == "__main__":
    sys.exit(main())
