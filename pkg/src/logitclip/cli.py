"""Command-line entry point: ``logitclip <subcommand> ...``.

Exit codes: 0 success, 2 bad config or input, 3 non-finite loss during
training, 4 a check failed (gradient suite or replay mismatch).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from logitclip import bounds, gradcheck, harness
from logitclip.data import KINDS, gen_synthetic, save_dataset_csv
from logitclip.errors import ConfigError, DimensionError, DomainError, NumericalAbort, ParseError
from logitclip.fileio import atomic_write_json, atomic_write_text, read_json
from logitclip.noise import measure_noise, write_external_noisy
from logitclip.numerics import Rng

log = logging.getLogger("logitclip")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_CHECK = 0, 2, 3, 4


def _emit(text, out):
    if out:
        atomic_write_text(harness.output_path(out, out), text)
    else:
        sys.stdout.write(text)


def _frange(start, stop, step):
    if step <= 0 or stop < start:
        raise ConfigError("range needs step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def cmd_bounds(args):
    ks = args.k
    taus = _frange(*args.tau_range) if args.tau_range else args.tau
    rows = ["K,tau,lower,upper,A"]
    for k in ks:
        for tau in taus:
            b = bounds.ce_clip_bounds(k, tau)
            rows.append(f"{k},{tau!r},{b.lower!r},{b.upper!r},{bounds.a_const(k, tau)!r}")
    _emit("\n".join(rows) + "\n", args.out)
    return EXIT_OK


def cmd_gradcheck(args):
    if args.trials == 0:
        log.warning("trials = 0: nothing checked, reporting a vacuous pass")
    losses = args.losses or gradcheck.ZOO
    unknown = set(losses) - set(gradcheck.ZOO)
    if unknown:
        raise ConfigError(f"unknown losses {sorted(unknown)}; expected from {list(gradcheck.ZOO)}")
    kinds = args.transforms or gradcheck.TRANSFORM_KINDS
    results = gradcheck.run_suite(losses, kinds, args.trials, args.seed, corrupt=args.corrupt)
    print(f"{'loss':<10} {'transform':<11} {'trials':>6} {'skipped':>7} {'floored':>7} {'max_rel_err':>12}  result")
    for r in results:
        verdict = "PASS" if r.passed else "FAIL"
        print(f"{r.loss:<10} {r.transform:<11} {r.trials:>6} {r.skipped:>7} {r.floored:>7} {r.max_rel_error:>12.3e}  {verdict}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} combinations pass (tolerance {gradcheck.REL_TOL:g})")
    return EXIT_CHECK if failed else EXIT_OK


def cmd_data(args):
    ds = gen_synthetic(args.kind, args.k, args.n, args.d, args.separation, Rng(args.seed).split("dataset"))
    path = harness.output_path(args.out, "dataset.csv")
    save_dataset_csv(path, ds)
    print(path)
    return EXIT_OK


def _load_config(args):
    cfg = harness.ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, train=cfg.train.replace(seed=args.seed))
    return cfg


def cmd_noise(args):
    cfg = _load_config(args)
    clean, _ = harness.load_data(cfg)
    noisy = harness.noisy_train_set(cfg, clean, cfg.train.seed)
    rate, est = measure_noise(noisy.clean_labels, noisy.noisy_labels, noisy.k)
    if args.out:
        write_external_noisy(harness.output_path(args.out, args.out), noisy.noisy_labels)
    print(json.dumps({"rate": rate, "matrix": est.round(6).tolist()}))
    return EXIT_OK


def _write_result(result, out, default_name):
    path = harness.output_path(out or result["config"]["output"], default_name)
    atomic_write_json(path, result)
    return path


def _replay(path):
    stored = read_json(path)
    same, _ = harness.replay(stored)
    print(f"replay of {path}: {'identical' if same else 'MISMATCH'}")
    return EXIT_OK if same else EXIT_CHECK


def _run(command, args):
    if args.replay:
        return _replay(args.replay)
    if not args.config:
        raise ConfigError("--config is required unless --replay is given")
    cfg = _load_config(args)
    if command == "sweep" and (args.grid or args.clip_kind):
        changes = {}
        if args.grid:
            changes["grid"] = args.grid
        if args.clip_kind:
            changes["lc_kind"] = args.clip_kind
        cfg = dataclasses.replace(cfg, compare=dataclasses.replace(cfg.compare, **changes))
    if command == "compare" and args.seeds:
        cfg = dataclasses.replace(cfg, compare=dataclasses.replace(cfg.compare, seeds=tuple(args.seeds)))
    result = harness.RUNNERS[command](cfg)
    path = _write_result(result, args.out, f"{command}_result.json")
    if command == "compare":
        csv_path = args.csv or path.with_suffix(".csv")
        atomic_write_text(csv_path, harness.compare_csv(result))
        sys.stdout.write(harness.compare_csv(result))
    else:
        rec = result["results"]
        print(json.dumps({"final_metric": rec["final_metric"], "final_drop": rec["final_drop"], "selected": rec["selected"]}))
    print(f"wrote {path}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="logitclip", description="Logit clipping experiments on synthetic data.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="CSV of clipped-CE loss bounds over a K x tau grid")
    p.add_argument("--k", type=int, nargs="+", default=[10])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float, nargs="+", default=[1.0])
    g.add_argument("--tau-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss x transform")
    p.add_argument("--losses", nargs="+")
    p.add_argument("--transforms", nargs="+", choices=gradcheck.TRANSFORM_KINDS)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("data", help="write a synthetic dataset CSV")
    p.add_argument("--kind", choices=KINDS, default="gaussians")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_data)

    p = sub.add_parser("noise", help="inject label noise and report the measured rate")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="run seed (overrides train.seed)")
    p.add_argument("--out", help="write noisy labels as index,noisy_label")
    p.set_defaults(func=cmd_noise)

    for name, helptext in (("train", "one training run"), ("sweep", "validation sweep over 1/tau"), ("compare", "loss table over seeds")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config")
        p.add_argument("--out")
        p.add_argument("--replay", metavar="RESULT_JSON", help="rerun a stored result and check it matches")
        if name != "compare":
            p.add_argument("--seed", type=int, help="run seed (overrides train.seed)")
        if name == "sweep":
            p.add_argument("--grid", type=float, nargs="+", help="candidate 1/tau values")
            p.add_argument("--clip-kind", choices=["by_norm", "by_value", "logit_norm"])
        if name == "compare":
            p.add_argument("--seeds", type=int, nargs="+")
            p.add_argument("--csv")
        p.set_defaults(func=lambda a, _n=name: _run(_n, a))
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalAbort as exc:
        log.error("%s", exc)
        return EXIT_ABORT
    except (ConfigError, ParseError, DomainError, DimensionError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
