"""Command-line harness: ``inelastic-bench <verb> ...``.

Exit codes: 0 success, 1 numerical failure (or a failed acceptance
check), 2 configuration or data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import acceptance, datagen, experiments, refmat
from .adnn import ConfigError
from .archzoo import NewtonError, TrainedModel
from .trainer import TrainingError

OUT_ENV = "INELASTIC_BENCH_OUT"


class UsageError(Exception):
    pass


def out_root(args):
    return args.out or os.environ.get(OUT_ENV) or "bench-out"


def _load_config(args):
    d = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if getattr(args, "preset", None):
        base = experiments.parse_preset(args.preset).to_dict()
        base.update(d)
        d = base
    for key, attr in (("material", "material"), ("kind", "arch"), ("seed", "seed"), ("n_pt", "n_pt"), ("dataset", "data")):
        v = getattr(args, attr, None)
        if v is not None:
            d[key] = v
    if getattr(args, "max_iter", None):
        d.setdefault("optim", {})["max_iter"] = args.max_iter
    for req in ("material", "kind"):
        if req not in d:
            raise UsageError(f"missing --{'arch' if req == 'kind' else req} (or a --config/--preset providing it)")
    return experiments.ExperimentConfig.from_dict(d)


def cmd_generate(args):
    refmat.get_material(args.material)
    out = out_root(args)
    os.makedirs(out, exist_ok=True)
    if args.kind == "spline":
        seqs = [datagen.gen_spline_path(args.material, seed=args.seed)]
    else:
        cfg = datagen.RandomWalkConfig(seed=args.seed, n_seq=args.n_seq, n_steps=args.n_steps)
        seqs = datagen.gen_random_walk(cfg, args.material)
    stem = os.path.join(out, f"{args.material.lower()}-{args.kind}-s{args.seed}")
    datagen.write_dataset(stem + ".csv", seqs)
    datagen.fit_scaling(seqs).save(stem + "-scaling.json")
    print(f"wrote {len(seqs)} sequences x {len(seqs[0]) - 1} steps to {stem}.csv")
    return 0


def cmd_train(args):
    exp = _load_config(args)
    out = out_root(args)
    os.makedirs(out, exist_ok=True)
    tm, reports = experiments.run_training(exp)
    stem = os.path.join(out, f"{exp.name}-s{exp.seed}")
    tm.save(stem + ".json")
    for phase, rep in reports.items():
        rep.save(f"{stem}-{phase}-report.json")
        rep.save_history(f"{stem}-{phase}-history.csv")
        print(f"{phase}: loss {rep.total:.3e} {rep.components} after {rep.iterations} iterations ({rep.stop_reason})")
    print(f"checkpoint {stem}.json")
    return 0


def cmd_validate(args):
    try:
        tm = TrainedModel.load(args.checkpoint)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load checkpoint {args.checkpoint}: {exc}") from exc
    material = args.material or tm.log.get("experiment", {}).get("material")
    if material is None:
        raise UsageError("checkpoint does not record its material; pass --material")
    out = out_root(args)
    tag = os.path.splitext(os.path.basename(args.checkpoint))[0]
    metrics, _ = experiments.validate(tm, material, args.path, out, tag=tag)
    print(json.dumps(metrics, indent=1, sort_keys=True))
    return 0


def cmd_reproduce(args):
    out = out_root(args)
    cache = os.path.join(out, "models")
    experiments.reproduce(args.figure, out, seed=args.seed, cache_dir=cache)
    return 0


def cmd_selftest(args):
    results = acceptance.selftest(quick=args.quick)
    return 0 if all(r.passed for r in results) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="inelastic-bench", description="Train and validate neural constitutive models of inelastic materials.")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="write a training dataset")
    g.add_argument("--material", required=True)
    g.add_argument("--kind", choices=("random-walk", "spline"), default="random-walk")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-seq", type=int, default=100)
    g.add_argument("--n-steps", type=int, default=100)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one architecture on one material")
    t.add_argument("--material")
    t.add_argument("--arch", help="architecture kind, e.g. fnn_sigma")
    t.add_argument("--preset", help="named default such as v1-fnn-sigma")
    t.add_argument("--config", help="JSON experiment file; flags override it")
    t.add_argument("--seed", type=int)
    t.add_argument("--n-pt", type=int)
    t.add_argument("--data", help="dataset CSV to train on")
    t.add_argument("--max-iter", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("validate", help="roll a checkpoint out on a validation path")
    v.add_argument("checkpoint")
    v.add_argument("--path", choices=("A", "B", "a", "b"), default="A")
    v.add_argument("--material")
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("reproduce", help="train and validate the models of a figure bundle")
    r.add_argument("figure", help=f"one of {', '.join(experiments.FIGURES)} or all")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("selftest", help="run the training-free acceptance checks")
    s.add_argument("--quick", action="store_true", help="reduced sample counts")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, datagen.DatasetError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (refmat.ConvergenceError, NewtonError, TrainingError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
