"""Command-line driver.

Subcommands: ``solve`` (per-type soft planning tables), ``entropy``
(conditional-entropy estimate under a payment), ``optimize`` (projected
gradient descent, trace CSV + final payment file + manifest), ``infer``
(averaged posterior given the true type), ``gradcheck`` (analytic
gradients against central finite differences).

Every command is deterministic given (config, flags, seed).  Numeric
output is printed with 17 significant digits so replayed runs diff clean.
Exit codes: 0 success, 1 usage error, 2 config error, 3 numerical failure.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ConfigurationError, DivergenceError, ZeroEvidenceError
from .gridworld import ACTIONS, build_problem, load_config_file, state_cells
from .hmm import sample_observations
from .inference import posterior_estimator
from .mdp import apply_side_payment, soft_q, soft_value_iteration, solve
from .optimize import (
    ObjectiveConfig,
    objective,
    optimize,
    solve_profile,
    total_gradient,
)
from .q_jacobian import solve_q_jacobian


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(value):
    return format(float(value), ".17g")


def _parse_x0(text, size):
    parts = [p for p in text.split(",") if p.strip() != ""]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"--x0 must be a float or comma-separated floats, got {text!r}")
    if len(values) == 1:
        return np.full(size, values[0])
    if len(values) != size:
        raise UsageError(
            f"--x0 has {len(values)} entries but the payment support has {size}"
        )
    return np.array(values)


def _add_common(parser):
    parser.add_argument("--config", required=True, help="path to a grid config YAML")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--horizon", type=int, default=12,
                        help="observation sequences carry horizon+1 symbols")
    parser.add_argument("--samples", type=int, default=2000)
    parser.add_argument("--beta", type=float, default=0.05)
    parser.add_argument("--step", type=float, default=0.1)
    parser.add_argument("--max-iters", type=int, default=200)
    parser.add_argument("--mode", choices=["exact", "sampled"], default="sampled")
    parser.add_argument("--x0", default="1",
                        help="payment vector: one float (broadcast) or comma list")
    parser.add_argument("--out", default=None, help="output path for file-writing commands")


def build_parser():
    parser = _Parser(prog="incentive-inference")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="print V*, Q*, and the softmax policy")
    _add_common(p_solve)
    p_solve.add_argument("--type", dest="type_id", type=int, default=1,
                         help="1-based follower type id")
    p_solve.set_defaults(handler=cmd_solve)

    p_entropy = sub.add_parser("entropy", help="conditional entropy of the type")
    _add_common(p_entropy)
    p_entropy.set_defaults(handler=cmd_entropy)

    p_opt = sub.add_parser("optimize", help="projected gradient descent on the payment")
    _add_common(p_opt)
    p_opt.add_argument("--grad-tol", type=float, default=1e-4)
    p_opt.set_defaults(handler=cmd_optimize)

    p_infer = sub.add_parser("infer", help="averaged posterior given the true type")
    _add_common(p_infer)
    p_infer.add_argument("--true-type", type=int, required=True,
                         help="1-based id of the type generating observations")
    p_infer.set_defaults(handler=cmd_infer)

    p_grad = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    _add_common(p_grad)
    p_grad.add_argument("--eps", type=float, default=1e-5)
    p_grad.set_defaults(handler=cmd_gradcheck)
    return parser


def _load(args):
    config = load_config_file(args.config)
    problem = build_problem(config)
    return config, problem


def _objective_config(args, mode=None, step=None):
    return ObjectiveConfig(
        horizon=args.horizon,
        sample_count=args.samples,
        beta=args.beta,
        step_size=step if step is not None else args.step,
        max_iters=getattr(args, "max_iters"),
        grad_tol=getattr(args, "grad_tol", 1e-4),
        seed=args.seed,
        entropy_mode=mode if mode is not None else args.mode,
    )


def _type_index(args, problem, attr):
    raw = getattr(args, attr)
    if not 1 <= raw <= problem.n_types:
        raise UsageError(
            f"unknown type {raw}: config has types 1..{problem.n_types}"
        )
    return raw - 1


def cmd_solve(args):
    config, problem = _load(args)
    idx = _type_index(args, problem, "type_id")
    spec = problem.followers[idx]
    payment = problem.payment(_parse_x0(args.x0, len(problem.support)))
    solution = solve(spec, payment)
    cells = state_cells(config)
    print(f"type {args.type_id}: {spec.n_states} states, {spec.n_actions} actions")
    print("V*:")
    for s, cell in enumerate(cells):
        print(f"  ({cell.col},{cell.row}) {_fmt(solution.v_star[s])}")
    print("Q* (columns: " + " ".join(ACTIONS) + "):")
    for s, cell in enumerate(cells):
        row = " ".join(_fmt(q) for q in solution.q_star[s])
        print(f"  ({cell.col},{cell.row}) {row}")
    print("policy (columns: " + " ".join(ACTIONS) + "):")
    for s, cell in enumerate(cells):
        row = " ".join(_fmt(p) for p in solution.policy[s])
        print(f"  ({cell.col},{cell.row}) {row}")
    return 0


def cmd_entropy(args):
    _, problem = _load(args)
    x = _parse_x0(args.x0, len(problem.support))
    cfg = _objective_config(args)
    j, h_bits, cost_term = objective(x, problem, cfg)
    print(f"entropy_bits {_fmt(h_bits)}")
    print(f"payment_cost {_fmt(cost_term)}")
    print(f"objective {_fmt(j)}")
    return 0


def _write_manifest(path, args, outputs):
    manifest = {
        "tool": "incentive-inference",
        "version": __version__,
        "command": args.command,
        "config": str(args.config),
        "seed": args.seed,
        "horizon": args.horizon,
        "samples": args.samples,
        "beta": args.beta,
        "step": args.step,
        "max_iters": args.max_iters,
        "mode": args.mode,
        "x0": args.x0,
        "outputs": [str(p) for p in outputs],
    }
    if getattr(args, "true_type", None) is not None:
        manifest["true_type"] = args.true_type
    with open(path, "w", encoding="utf-8") as handle:
        yaml.safe_dump(manifest, handle, sort_keys=True)


def cmd_optimize(args):
    if args.out is None:
        raise UsageError("optimize requires --out for the trace CSV")
    config, problem = _load(args)
    x0 = _parse_x0(args.x0, len(problem.support))
    cfg = _objective_config(args)
    trace = optimize(problem, cfg, x0=x0)

    out = Path(args.out)
    n_support = len(problem.support)
    with open(out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["iter"] + [f"x{i}" for i in range(n_support)] + ["H", "h", "J", "gnorm"]
        )
        for record in trace.records:
            writer.writerow(
                [record.iteration]
                + [_fmt(v) for v in record.payment]
                + [
                    _fmt(record.entropy),
                    _fmt(record.payment_cost),
                    _fmt(record.objective),
                    _fmt(record.grad_norm),
                ]
            )
    payment_path = out.with_suffix(".payment.yaml")
    final = trace.final
    payment_doc = {
        "status": trace.status,
        "iterations": len(trace.records),
        "support": [
            {
                "cell": [config.payment_cell.col, config.payment_cell.row],
                "action": action,
                "value": float(value),
            }
            for action, value in zip(config.payment_actions, final.payment)
        ],
        "entropy_bits": float(final.entropy),
        "objective": float(final.objective),
    }
    with open(payment_path, "w", encoding="utf-8") as handle:
        yaml.safe_dump(payment_doc, handle, sort_keys=False)
    manifest_path = out.with_suffix(".manifest.yaml")
    _write_manifest(manifest_path, args, [out, payment_path])
    print(f"wrote {out} ({len(trace.records)} iterations, status {trace.status})")
    print(f"wrote {payment_path}")
    print(f"wrote {manifest_path}")
    return 0


def cmd_infer(args):
    _, problem = _load(args)
    idx = _type_index(args, problem, "true_type")
    x = _parse_x0(args.x0, len(problem.support))
    _, aug = solve_profile(problem, problem.payment(x))
    _, seqs = sample_observations(
        aug, args.samples, args.horizon, args.seed, true_type=idx
    )
    estimates = posterior_estimator(aug, seqs)
    for i, value in enumerate(estimates):
        print(f"P(type={i + 1}|Y) {_fmt(value)}")
    return 0


def _max_rel_err(analytic, numeric, floor=1e-9):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def cmd_gradcheck(args):
    if args.eps <= 0:
        raise UsageError("--eps must be positive")
    _, problem = _load(args)
    x = _parse_x0(args.x0, len(problem.support))
    cfg = _objective_config(args)
    errors = []

    # reward sensitivity of Q* for each type, against central differences
    payment = problem.payment(x)
    for t, spec in enumerate(problem.followers):
        reward = apply_side_payment(spec, payment)
        solution = solve(spec, payment)
        jac = solve_q_jacobian(spec, solution)
        rng = np.random.default_rng(args.seed)
        cols = rng.choice(reward.size, size=min(4, reward.size), replace=False)
        fd = np.empty((reward.size, len(cols)))
        for j, col in enumerate(cols):
            bump = np.zeros(reward.size)
            bump[col] = args.eps
            bump = bump.reshape(reward.shape)
            v_hi = soft_value_iteration(spec, reward + bump, tol=1e-12)
            v_lo = soft_value_iteration(spec, reward - bump, tol=1e-12)
            q_hi = soft_q(spec, reward + bump, v_hi)
            q_lo = soft_q(spec, reward - bump, v_lo)
            fd[:, j] = ((q_hi - q_lo) / (2 * args.eps)).reshape(-1)
        err = _max_rel_err(jac[:, cols], fd)
        errors.append(err)
        print(f"dQ*/dR type {t + 1}: max rel err {_fmt(err)}")

    # end-to-end objective gradient against central differences
    grad = total_gradient(x, problem, cfg)
    fd = np.empty_like(x)
    for j in range(x.size):
        bump = np.zeros_like(x)
        bump[j] = args.eps
        j_hi, _, _ = objective(x + bump, problem, cfg)
        j_lo, _, _ = objective(x - bump, problem, cfg)
        fd[j] = (j_hi - j_lo) / (2 * args.eps)
    err = _max_rel_err(grad, fd)
    errors.append(err)
    print(f"DJ(x) [{cfg.entropy_mode}]: max rel err {_fmt(err)}")
    print(f"max relative error {_fmt(max(errors))}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, ZeroEvidenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
