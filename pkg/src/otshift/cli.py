"""Command-line interface.

Every subcommand reads plain CSV/JSON files, carries an explicit --seed
(default 0), and writes deterministically, so any invocation repeated with
the same inputs produces byte-identical output. Errors print one line with
the prefix "error:"; exit status is 0 on success, 1 on data or validation
problems, 2 on usage mistakes.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .adapter import h_otter, otter, zero_shot
from .core import LabelDistribution, empirical_distribution
from .diagnostics import accuracy, recall_std
from .errors import OtshiftError
from .fileio import (
    read_conditionals,
    read_distribution,
    read_hierarchy,
    read_predictions,
    read_reweight,
    read_scores,
    write_distribution,
    write_predictions,
    write_reweight,
)
from .reweight import fit_rotter, grid_search_pm, reweight_predict
from .shift_est import bbse_estimate, estimation_error, soft_confusion
from .synthlab import SweepConfig, run_shift_sweep, sweep_to_csv


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_solver_flags(p):
    p.add_argument("--solver", choices=("exact", "entropic"),
                   default="exact")
    p.add_argument("--reg", type=float, default=0.05,
                   help="entropic regularization strength")
    p.add_argument("--clamp-eps", type=float, default=1e-12,
                   help="score floor before taking -log")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=0)


def _float_list(text):
    return tuple(float(x) for x in text.split(",") if x.strip() != "")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otshift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("adapt", help="rebalance scores to a target "
                       "distribution via transport")
    p.add_argument("--scores", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    _add_seed(p)

    p = sub.add_parser("zeroshot", help="plain argmax predictions")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("rotter-fit", help="distill transport output into a "
                       "per-class reweight vector")
    p.add_argument("--scores", required=True,
                   help="validation scores to fit on")
    p.add_argument("--dist", required=True,
                   help="target distribution for the pseudo-labeling step")
    p.add_argument("--labels", default=None,
                   help="optional explicit pseudo-labels CSV (skips the "
                   "transport step)")
    p.add_argument("--out", required=True, help="reweight JSON path")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--steps", type=int, default=500)
    _add_solver_flags(p)
    _add_seed(p)

    p = sub.add_parser("rotter-apply", help="apply a reweight vector")
    p.add_argument("--scores", required=True)
    p.add_argument("--reweight", required=True)
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("pm-fit", help="grid-searched prior matching fit")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True,
                   help="validation truth labels CSV for model selection")
    p.add_argument("--dist", required=True)
    p.add_argument("--out", required=True, help="reweight JSON path")
    p.add_argument("--steps", type=int, default=200)
    _add_seed(p)

    p = sub.add_parser("bbse", help="estimate the target distribution from "
                       "source data and target scores")
    p.add_argument("--source-scores", required=True)
    p.add_argument("--source-labels", required=True)
    p.add_argument("--target-scores", required=True)
    p.add_argument("--source-dist", default=None,
                   help="source distribution; defaults to the empirical "
                   "distribution of the source labels")
    p.add_argument("--variant", choices=("inverse", "multiply"),
                   default="inverse")
    p.add_argument("--out", required=True, help="estimated distribution CSV")
    _add_seed(p)

    p = sub.add_parser("hotter", help="two-stage hierarchical rebalancing")
    p.add_argument("--scores", required=True, help="subclass scores")
    p.add_argument("--hierarchy", required=True,
                   help='JSON {"groups": [[1-based subclass indices]...]}')
    p.add_argument("--super-dist", required=True)
    p.add_argument("--conditionals", required=True,
                   help='JSON {"conditionals": [[...]...]}, one per group')
    p.add_argument("--super-scores", default=None,
                   help="optional superclass scores CSV; defaults to "
                   "within-group sums")
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    _add_seed(p)

    p = sub.add_parser("synth", help="synthetic experiment harness")
    synth_sub = p.add_subparsers(dest="synth_command", required=True)
    p = synth_sub.add_parser("sweep", help="label-shift sweep CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--nu-s", type=_float_list, default=(0.1, 0.9))
    p.add_argument("--grid", type=_float_list,
                   default=tuple(round(0.1 * i, 1) for i in range(1, 10)),
                   help="class-1 target masses to sweep")
    p.add_argument("--n-train", type=int, default=10000)
    p.add_argument("--n-test", type=int, default=10000)
    p.add_argument("--n-val", type=int, default=2000)
    p.add_argument("--methods", default="naive,otter,bayes,rotter")
    p.add_argument("--seeds", type=int, default=10,
                   help="number of seeds (0..N-1)")
    p.add_argument("--noise-score", type=_float_list, default=(),
                   help="comma list of score-noise sigmas")
    p.add_argument("--noise-dist", type=_float_list, default=(),
                   help="comma list of distribution-noise epsilons")
    p.add_argument("--adversarial-alpha", type=_float_list, default=(),
                   help="comma list of adversarial interpolation alphas")
    p.add_argument("--score-mode", choices=("calibrated", "fitted"),
                   default="calibrated")
    _add_seed(p)

    p = sub.add_parser("report", help="accuracy, recall spread, and "
                       "prediction-balance TV against truth labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--k", type=int, default=None)
    _add_seed(p)

    return parser


def _cmd_adapt(args):
    s = read_scores(args.scores)
    nu = read_distribution(args.dist)
    pred = otter(s, nu, solver=args.solver, reg=args.reg,
                 clamp_eps=args.clamp_eps)
    write_predictions(pred, args.out)
    return 0


def _cmd_zeroshot(args):
    write_predictions(zero_shot(read_scores(args.scores)), args.out)
    return 0


def _cmd_rotter_fit(args):
    s = read_scores(args.scores)
    nu = read_distribution(args.dist)
    if args.labels is not None:
        pseudo = read_predictions(args.labels, k=s.k)
    else:
        pseudo = otter(s, nu, solver=args.solver, reg=args.reg,
                       clamp_eps=args.clamp_eps)
    rw, fit = fit_rotter(s, pseudo, lr=args.lr, steps=args.steps,
                         seed=args.seed)
    write_reweight(rw, args.out)
    print(f"final_loss={fit.final_loss:.17g}")
    return 0


def _cmd_rotter_apply(args):
    s = read_scores(args.scores)
    rw = read_reweight(args.reweight)
    write_predictions(reweight_predict(s, rw), args.out)
    return 0


def _cmd_pm_fit(args):
    s = read_scores(args.scores)
    y = read_predictions(args.labels, k=s.k)
    nu = read_distribution(args.dist)
    rw, sel = grid_search_pm(s, y, nu, steps=args.steps, seed=args.seed)
    write_reweight(rw, args.out, temperature=sel.temperature)
    print(f"temperature={sel.temperature:.17g}")
    print(f"lr={sel.lr:.17g}")
    print(f"val_accuracy={sel.val_accuracy:.17g}")
    print(f"mismatch={sel.mismatch:.17g}")
    return 0


def _cmd_bbse(args):
    s_src = read_scores(args.source_scores)
    y_src = read_predictions(args.source_labels, k=s_src.k)
    s_tgt = read_scores(args.target_scores)
    if args.source_dist is not None:
        nu_src = read_distribution(args.source_dist)
    else:
        nu_src = empirical_distribution(y_src)
    est = bbse_estimate(soft_confusion(s_src, y_src), s_tgt, nu_src,
                        variant=args.variant)
    write_distribution(est, args.out)
    return 0


def _cmd_hotter(args):
    s_sub = read_scores(args.scores)
    hierarchy = read_hierarchy(args.hierarchy)
    nu_super = read_distribution(args.super_dist)
    conds = read_conditionals(args.conditionals)
    s_super = (read_scores(args.super_scores)
               if args.super_scores is not None else None)
    pred = h_otter(s_sub, hierarchy, nu_super, conds, s_super=s_super,
                   solver=args.solver, clamp_eps=args.clamp_eps,
                   reg=args.reg)
    write_predictions(pred, args.out)
    return 0


def _cmd_synth_sweep(args):
    nu_s = LabelDistribution(np.asarray(args.nu_s))
    targets = tuple(
        LabelDistribution(np.array([v, 1.0 - v])) for v in args.grid
    )
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    seeds = tuple(range(args.seeds))
    base = dict(
        nu_s=nu_s, nu_t_list=targets, n_train=args.n_train,
        n_test=args.n_test, n_val=args.n_val, methods=methods, seeds=seeds,
        score_mode=args.score_mode,
    )
    noise_runs = [
        ("score", args.noise_score),
        ("dist", args.noise_dist),
        ("adversarial", args.adversarial_alpha),
    ]
    rows = []
    requested = [(kind, levels) for kind, levels in noise_runs if levels]
    if not requested:
        requested = [("none", (0.0,))]
    for kind, levels in requested:
        cfg = SweepConfig(noise_kind=kind, noise_levels=levels, **base)
        rows.extend(run_shift_sweep(cfg))
    with open(args.out, "w", newline="") as fh:
        fh.write(sweep_to_csv(rows))
    return 0


def _cmd_report(args):
    pred = read_predictions(args.pred)
    truth = read_predictions(args.truth)
    k = args.k or max(pred.k, truth.k)
    pred = read_predictions(args.pred, k=k)
    truth = read_predictions(args.truth, k=k)
    print(f"accuracy={accuracy(pred, truth):.17g}")
    print(f"recall_std={recall_std(pred, truth, k):.17g}")
    tv = estimation_error(
        empirical_distribution(pred, k), empirical_distribution(truth, k)
    )
    print(f"tv={tv:.17g}")
    return 0


_HANDLERS = {
    "adapt": _cmd_adapt,
    "zeroshot": _cmd_zeroshot,
    "rotter-fit": _cmd_rotter_fit,
    "rotter-apply": _cmd_rotter_apply,
    "pm-fit": _cmd_pm_fit,
    "bbse": _cmd_bbse,
    "hotter": _cmd_hotter,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if args.command == "synth":
            return _cmd_synth_sweep(args)
        return _HANDLERS[args.command](args)
    except (OtshiftError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
