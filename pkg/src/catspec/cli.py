"""Command-line entry point.

Subcommands: model-info, verify-escape, spectrum, campaign, plotdata.
Flags --config/--out/--threads/--seed can also be set through the
environment as CATSPEC_CONFIG, CATSPEC_OUT, CATSPEC_THREADS, CATSPEC_SEED.
Exit status: 0 all enabled checks pass, 1 check failures, 2 config errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness as hs
from .config import DEFAULT_CONFIG, RunConfig, load_config, parse_config
from .errors import CatspecError, ConfigError, EstimateViolation
from .escape import EscapeFunction, verify_escape_estimates


def _parser():
    p = argparse.ArgumentParser(prog="catspec")
    p.add_argument("--config", default=os.environ.get("CATSPEC_CONFIG"),
                   help="path to INI config (defaults to built-in config)")
    p.add_argument("--out", default=os.environ.get("CATSPEC_OUT"),
                   help="output directory (overrides config)")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("CATSPEC_THREADS", "1")))
    p.add_argument("--seed", type=int,
                   default=os.environ.get("CATSPEC_SEED"))
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("model-info", help="print eigen-data, return time, hyperbolicity fit")
    sub.add_parser("verify-escape", help="run the escape estimate suite, write CSV")
    sub.add_parser("spectrum", help="compute the resonance spectrum, write CSV")
    sub.add_parser("campaign", help="run all enabled theorem checks, write JSON")
    sub.add_parser("plotdata", help="write plot-ready spectrum and box-count CSV")
    sub.add_parser("print-config", help="print the default config file")
    return p


def _load(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = parse_config(DEFAULT_CONFIG)
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = int(args.seed)
    return cfg


def _header(cfg):
    return f"# config_sha256={cfg.sha()}\n"


def _write(cfg, name, payload):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(payload)
    return path


def _spectrum_csv(cfg, res):
    lines = [_header(cfg).rstrip("\n"), "sector_key,re,im,residual,multiplicity"]
    for e in res.entries:
        lines.append(f"{e.sector_key},{e.value.real:.17g},{e.value.imag:.17g},"
                     f"{e.residual:.17g},{e.multiplicity}")
    return "\n".join(lines) + "\n"


def cmd_model_info(cfg):
    flow = cfg.flow()
    cat = flow.cat
    c_hyp, theta_fit = flow.measure_hyperbolicity(seed=cfg.seed)
    print(f"matrix            [[{cat.matrix[0,0]}, {cat.matrix[0,1]}], "
          f"[{cat.matrix[1,0]}, {cat.matrix[1,1]}]]")
    print(f"lambda_u          {cat.lambda_u:.15g}")
    print(f"lambda_s          {cat.lambda_s:.15g}")
    print(f"unstable dir      ({cat.e_u[0]:.12g}, {cat.e_u[1]:.12g})")
    print(f"stable dir        ({cat.e_s[0]:.12g}, {cat.e_s[1]:.12g})")
    print(f"return time       {flow.period:.15g}")
    print(f"theta             {flow.theta:.15g}")
    print(f"hyperbolicity fit c_hyp={c_hyp:.6g} theta={theta_fit:.6g} "
          f"(target {flow.theta:.6g})")
    return 0


def cmd_verify_escape(cfg):
    flow = cfg.flow()
    escape = EscapeFunction(flow, cfg.escape)
    try:
        rep = verify_escape_estimates(escape, sample_count=cfg.escape_samples,
                                      seed=cfg.seed)
    except EstimateViolation as exc:
        print(f"FAIL escape estimates: {exc}", file=sys.stderr)
        return 1
    path = _write(cfg, "escape.csv", _header(cfg) + rep.to_csv())
    print(f"escape estimates: c={rep.c_measured:.6g} decay bound="
          f"{rep.decay_bound:.6g} max X(G)={rep.max_everywhere:.3e} "
          f"violations={rep.violations}")
    print(f"wrote {path}")
    return 0


def cmd_spectrum(cfg):
    flow = cfg.flow()
    res = hs.extract_resonances(flow, cfg.escape, cfg.truncation, h=cfg.h,
                                residual_tol=cfg.residual_tol,
                                cluster_radius=cfg.cluster_radius)
    path = _write(cfg, "spectrum.csv", _spectrum_csv(cfg, res))
    print(f"{len(res.entries)} entries (total multiplicity "
          f"{res.total_multiplicity()}); wrote {path}")
    return 0


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"not JSON-able: {type(obj)}")


def cmd_campaign(cfg, threads=1):
    flow = cfg.flow()
    report, study = hs.run_campaign(flow, cfg, threads=max(1, threads),
                                    progress=lambda n: print(f"check: {n}"))
    report["config_sha256"] = cfg.sha()
    payload = json.dumps(report, indent=2, sort_keys=True,
                         default=_json_default) + "\n"
    path = _write(cfg, "campaign.json", payload)
    if study is not None:
        rows = [_header(cfg).rstrip("\n"), "alpha,count"]
        rows += [f"{a:.17g},{n}" for a, n in zip(study.alphas, study.counts)]
        _write(cfg, "counts.csv", "\n".join(rows) + "\n")
    failures = sorted(k for k, v in report["verdicts"].items() if not v)
    print(f"wrote {path}")
    if failures:
        print(json.dumps({"failed_checks": failures}))
        return 1
    print("all checks passed")
    return 0


def cmd_plotdata(cfg):
    flow = cfg.flow()
    res = hs.extract_resonances(flow, cfg.escape, cfg.truncation, h=cfg.h,
                                residual_tol=cfg.residual_tol,
                                cluster_radius=cfg.cluster_radius)
    _write(cfg, "spectrum.csv", _spectrum_csv(cfg, res))
    study = hs.scaling_study(flow, cfg.escape, cfg.truncation, cfg.E,
                             cfg.alpha_grid, cfg.beta)
    rows = [_header(cfg).rstrip("\n"), "alpha,count"]
    rows += [f"{a:.17g},{n}" for a, n in zip(study.alphas, study.counts)]
    _write(cfg, "counts.csv", "\n".join(rows) + "\n")
    print(f"wrote spectrum.csv and counts.csv to {cfg.out_dir}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "print-config":
        print(DEFAULT_CONFIG, end="")
        return 0
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "model-info":
            return cmd_model_info(cfg)
        if args.command == "verify-escape":
            return cmd_verify_escape(cfg)
        if args.command == "spectrum":
            return cmd_spectrum(cfg)
        if args.command == "campaign":
            return cmd_campaign(cfg, threads=args.threads)
        if args.command == "plotdata":
            return cmd_plotdata(cfg)
    except CatspecError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
