"""Command-line entry point: train, reference, evaluate, compare, list-problems.

Every run writes its artifacts into a fresh directory and finishes with a
manifest (name, sha256 per artifact) as the atomic completion marker.  Exit
codes: 0 success, 1 usage/configuration problems, 2 numeric failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__, fdm
from .errors import (ConfigurationError, NumericError, TrainingDiverged,
                     UndefinedMetricError, UnknownProblemError)
from .evaluation import build_test_set, evaluate, export_plots
from .models import BACKBONES, MODEL_KINDS, default_backbone, Predictor
from .networks import load_checkpoint, save_checkpoint
from .problems import PROBLEM_NAMES, get_problem
from .training import TrainConfig, train, write_history_csv

USAGE_EXIT = 1
NUMERIC_EXIT = 2

MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_root():
    return os.environ.get("SPINN_OUT", os.path.join(os.getcwd(), "runs"))


def _prepare_out(path, force):
    if os.path.isdir(path) and os.listdir(path):
        if not force:
            raise UsageError(
                f"output directory {path!r} is not empty; pass --force to overwrite")
        for name in os.listdir(path):
            full = os.path.join(path, name)
            if os.path.isfile(full):
                os.remove(full)
    os.makedirs(path, exist_ok=True)


def _write_manifest(out_dir, config, artifacts):
    manifest = {
        "config": config,
        "artifacts": [{"path": name, "sha256": _sha256(os.path.join(out_dir, name))}
                      for name in artifacts],
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }
    tmp = os.path.join(out_dir, MANIFEST_NAME + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(out_dir, MANIFEST_NAME))
    return manifest


def _load_config_file(path):
    with open(path) as fh:
        data = json.load(fh)
    unknown = set(data) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown config fields in {path}: {sorted(unknown)}")
    return data


def cmd_train(args):
    overrides = _load_config_file(args.config) if args.config else {}
    overrides.update(problem=args.problem, model=args.model, backbone=args.backbone)
    for flag, key in (("iterations", "iterations"), ("lr", "learning_rate"),
                      ("seed", "seed"), ("epsilon", "epsilon"),
                      ("points", "n_interior"), ("boundary_points", "n_boundary"),
                      ("initial_points", "n_initial")):
        val = getattr(args, flag)
        if val is not None:
            overrides[key] = val
    cfg = TrainConfig(**overrides)
    out_dir = args.out or os.path.join(
        _out_root(), f"{cfg.problem}-{cfg.model}-{cfg.backbone}-seed{cfg.seed}")
    _prepare_out(out_dir, args.force)

    problem = get_problem(cfg.problem, cfg.epsilon)
    result = train(cfg, problem)

    meta = {
        "problem": cfg.problem,
        "model": cfg.model,
        "backbone": cfg.backbone,
        "epsilon": problem.epsilon,
        "seed": cfg.seed,
        "iterations": cfg.iterations,
    }
    save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), result.params_list, meta)
    write_history_csv(os.path.join(out_dir, "loss_history.csv"), result.history)

    test_set = build_test_set(problem, n=args.ref_n, m=args.ref_m)
    report, field_cols = evaluate(
        lambda pts: result.predictor.predict(result.params_list, pts),
        problem, test_set, model=cfg.model, backbone=cfg.backbone,
        wall_seconds=result.wall_seconds, iterations=cfg.iterations, seed=cfg.seed)
    export_plots(report, field_cols, result.history, out_dir)
    report.files = sorted(set(report.files) | {"checkpoint.npz", "loss_history.csv"})
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    artifacts = sorted(set(report.files) | {"report.json"})
    _write_manifest(out_dir, cfg.to_dict(), artifacts)
    print(f"{cfg.problem} {cfg.model} {cfg.backbone} seed={cfg.seed}: "
          f"relative_l2={report.relative_l2:.3e} wall={report.wall_seconds:.1f}s")
    print(out_dir)
    return 0


def cmd_reference(args):
    problem = get_problem(args.problem, args.epsilon)
    if problem.input_dim == 1:
        print(f"{args.problem} is a 1-D problem: its test set comes from the "
              "analytic solution, no finite-difference reference is needed "
              "(see `spinnlab train`).", file=sys.stderr)
        return USAGE_EXIT
    out_dir = args.out or os.path.join(_out_root(), f"reference-{args.problem}")
    _prepare_out(out_dir, args.force)
    if problem.domain == "square":
        sol = fdm.solve_steady_2d(problem, args.n)
    else:
        sol = fdm.solve_parabolic(problem, args.n, args.m)
    csv_path = os.path.join(out_dir, "reference.csv")
    meta = fdm.save_grid(sol, csv_path, os.path.join(out_dir, "reference.json"))
    _write_manifest(out_dir, {"problem": args.problem, "n": args.n, "m": args.m,
                              "epsilon": problem.epsilon},
                    ["reference.csv", "reference.json"])
    print(f"reference for {args.problem}: {meta['rows']} rows, "
          f"checksum {meta['checksum'][:12]}")
    print(out_dir)
    return 0


def _predictor_from_checkpoint(run_dir):
    path = os.path.join(run_dir, "checkpoint.npz")
    if not os.path.isfile(path):
        raise UsageError(f"no checkpoint.npz in {run_dir!r}")
    params_list, meta = load_checkpoint(path)
    problem = get_problem(meta["problem"], meta["epsilon"])
    predictor = Predictor(meta["model"], default_backbone(meta["backbone"], problem.input_dim),
                          priors=problem.priors, epsilon=problem.epsilon)
    return predictor, params_list, problem, meta


def cmd_evaluate(args):
    predictor, params_list, problem, meta = _predictor_from_checkpoint(args.run_dir)
    reference = None
    if problem.input_dim > 1:
        if not args.reference:
            raise UsageError(
                f"{problem.name} needs a finite-difference test set; generate one "
                f"with `spinnlab reference {problem.name}` and pass --reference")
        ref_csv = args.reference if args.reference.endswith(".csv") \
            else os.path.join(args.reference, "reference.csv")
        if not os.path.isfile(ref_csv):
            raise UsageError(f"reference CSV {ref_csv!r} not found; regenerate it "
                             f"with `spinnlab reference {problem.name}`")
        pts, vals = fdm.load_grid(ref_csv)
        from .evaluation import TestSet
        xs = np.unique(pts[:, 0])
        ys = np.unique(pts[:, 1])
        test_set = TestSet(pts, vals, axes=(xs, ys))
    else:
        test_set = build_test_set(problem)
    out_dir = args.out or os.path.join(args.run_dir, "evaluation")
    _prepare_out(out_dir, args.force)
    history = []
    hist_path = os.path.join(args.run_dir, "loss_history.csv")
    if os.path.isfile(hist_path):
        history = np.loadtxt(hist_path, delimiter=",", skiprows=1).reshape(-1, 6).tolist()
    report, field_cols = evaluate(
        lambda pts: predictor.predict(params_list, pts),
        problem, test_set, model=meta["model"], backbone=meta["backbone"],
        wall_seconds=float(history[-1][5]) if history else 0.0,
        iterations=meta.get("iterations", 0), seed=meta.get("seed", 0))
    export_plots(report, field_cols, history, out_dir)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, {"run_dir": args.run_dir}, sorted(set(report.files) | {"report.json"}))
    print(f"relative_l2={report.relative_l2:.3e}")
    print(out_dir)
    return 0


def cmd_compare(args):
    if len(args.run_dirs) < 2:
        raise UsageError("compare needs at least two run directories")
    rows = []
    for run in args.run_dirs:
        path = os.path.join(run, "report.json")
        if not os.path.isfile(path):
            raise UsageError(f"no report.json in {run!r}; finish the run "
                             "(or re-run `spinnlab evaluate`) first")
        with open(path) as fh:
            rows.append((run, json.load(fh)))
    problems_seen = {r["problem"] for _, r in rows}
    if len(problems_seen) != 1:
        raise UsageError(f"runs mix problems {sorted(problems_seen)}; "
                         "compare runs of one problem only")
    base = rows[0][1]
    header = f"{'run':32s} {'model':8s} {'backbone':8s} {'relative_l2':>12s} " \
             f"{'wall_s':>9s} {'l2_ratio':>9s} {'time_ratio':>10s}"
    lines = [header, "-" * len(header)]
    csv_lines = ["run,model,backbone,relative_l2,wall_seconds,l2_ratio,time_ratio"]
    for run, r in rows:
        l2r = r["relative_l2"] / base["relative_l2"] if base["relative_l2"] else float("nan")
        tr = r["wall_seconds"] / base["wall_seconds"] if base["wall_seconds"] else float("nan")
        name = os.path.basename(os.path.normpath(run))[:32]
        lines.append(f"{name:32s} {r['model']:8s} {r['backbone']:8s} "
                     f"{r['relative_l2']:12.4e} {r['wall_seconds']:9.1f} "
                     f"{l2r:9.3f} {tr:10.3f}")
        csv_lines.append(",".join([name, r["model"], r["backbone"],
                                   "%.17g" % r["relative_l2"],
                                   "%.6f" % r["wall_seconds"],
                                   "%.6f" % l2r, "%.6f" % tr]))
    print("\n".join(lines))
    out_csv = args.out or "comparison.csv"
    if os.path.exists(out_csv) and not args.force:
        raise UsageError(f"{out_csv!r} exists; pass --force to overwrite")
    with open(out_csv, "w") as fh:
        fh.write("\n".join(csv_lines) + "\n")
    return 0


def cmd_list_problems(args):
    print(f"{'name':8s} {'dim':>3s} {'domain':10s} {'layer':10s} {'exact':5s}")
    for name in PROBLEM_NAMES:
        p = get_problem(name)
        prior = p.priors[0]
        axis = "xy"[prior.normal_dim] if p.domain == "square" else \
            ("x" if prior.normal_dim == 0 else "t")
        print(f"{name:8s} {p.input_dim:3d} {p.domain:10s} "
              f"{axis}={prior.position:<8g} {'yes' if p.has_exact else 'no':5s}")
    return 0


def build_parser():
    parser = _Parser(prog="spinnlab",
                     description="Boundary-layer solver laboratory: train and "
                                 "compare residual-trained networks against "
                                 "layer-resolving finite differences.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one model and write a run directory")
    t.add_argument("problem", choices=PROBLEM_NAMES)
    t.add_argument("model", choices=MODEL_KINDS)
    t.add_argument("backbone", choices=BACKBONES)
    t.add_argument("--iterations", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--epsilon", type=float, default=None)
    t.add_argument("--points", type=int, default=None,
                   help="interior collocation points")
    t.add_argument("--boundary-points", dest="boundary_points", type=int, default=None)
    t.add_argument("--initial-points", dest="initial_points", type=int, default=None)
    t.add_argument("--config", help="JSON file with TrainConfig fields (flags win)")
    t.add_argument("--ref-n", type=int, default=1024,
                   help="reference grid intervals for PDE test sets")
    t.add_argument("--ref-m", type=int, default=512,
                   help="reference time steps for parabolic test sets")
    t.add_argument("--out")
    t.add_argument("--force", action="store_true")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reference", help="write a frozen finite-difference test set")
    r.add_argument("problem", choices=PROBLEM_NAMES)
    r.add_argument("--n", type=int, default=1024)
    r.add_argument("--m", type=int, default=512)
    r.add_argument("--epsilon", type=float, default=None)
    r.add_argument("--out")
    r.add_argument("--force", action="store_true")
    r.set_defaults(func=cmd_reference)

    e = sub.add_parser("evaluate", help="re-evaluate a finished run from its checkpoint")
    e.add_argument("run_dir")
    e.add_argument("--reference", help="reference run directory or CSV (PDE problems)")
    e.add_argument("--out")
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="tabulate reports of runs on one problem")
    c.add_argument("run_dirs", nargs="+")
    c.add_argument("--out", help="comparison CSV path (default ./comparison.csv)")
    c.add_argument("--force", action="store_true")
    c.set_defaults(func=cmd_compare)

    lp = sub.add_parser("list-problems", help="show the problem registry")
    lp.set_defaults(func=cmd_list_problems)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (UnknownProblemError, ConfigurationError, UndefinedMetricError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except TrainingDiverged as exc:
        print(f"numeric failure: {exc} (last finite checkpoint retained in memory; "
              "rerun with a smaller learning rate)", file=sys.stderr)
        return NUMERIC_EXIT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
