"""Command-line pipelines: ``grid`` -> ``synth`` -> ``simulate``.

Exit codes: 0 success, 1 invalid model, 2 unreadable input or bad arguments,
3 infeasible stage program, 4 model/policy/start mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from cmdpsynth import density, gridworld
from cmdpsynth.constrained import InfeasibleStageError, SynthesisError, synthesize, synthesize_projected
from cmdpsynth.lp import FEAS_TOL, PIVOT_TOL
from cmdpsynth.model import (
    ConstraintError,
    ModelFormatError,
    apply_discount,
    load_model,
    load_policy,
    save_model,
    save_policy,
    validate_model,
)
from cmdpsynth.unconstrained import backward_induction

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 1, 2, 3, 4
MODES = ("unconstrained", "constrained", "projected")


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _read_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(
            EXIT_USAGE, f"{path}: JSON parse error at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}"
        ) from None
    except ModelFormatError as exc:
        raise CliError(EXIT_USAGE, f"{path}: {exc}") from None
    except ConstraintError as exc:
        raise CliError(EXIT_INVALID, f"{path}: invalid density caps: {exc}") from None


def _read_valid_model(path):
    model, constraint = _read_model(path)
    report = validate_model(model)
    if not report.ok:
        raise CliError(EXIT_INVALID, f"{path}: invalid model\n{report}")
    return model, constraint


def _start_vector(args, n):
    if args.start_file is not None:
        try:
            x1 = np.array(json.loads(Path(args.start_file).read_text(encoding="utf-8")), dtype=float)
        except (OSError, ValueError, TypeError) as exc:
            raise CliError(EXIT_USAGE, f"cannot read start distribution: {exc}") from None
        if x1.shape != (n,):
            raise CliError(EXIT_MISMATCH, f"start distribution has shape {x1.shape}, model has {n} states")
        if np.any(x1 < 0) or abs(x1.sum() - 1.0) > 1e-9:
            raise CliError(EXIT_USAGE, "start distribution must be nonnegative and sum to 1")
        return x1
    if args.start_state is None:
        return None
    if not 0 <= args.start_state < n:
        raise CliError(EXIT_MISMATCH, f"start state {args.start_state} outside 0..{n - 1}")
    return np.eye(n)[args.start_state]


def _solver_options(args):
    return {"pivot_tol": args.pivot_tol, "feas_tol": args.feas_tol}


def _synthesize(mode, model, constraint, solver):
    if mode == "unconstrained":
        policy, vf = backward_induction(model)
        meta = {"mode": mode, "v": vf.v.tolist(), "argmax_actions": vf.argmax_actions.tolist()}
        return policy, meta
    fn = synthesize if mode == "constrained" else synthesize_projected
    policy, values = fn(model, constraint, **solver)
    meta = {
        "mode": mode,
        "u": values.u.tolist(),
        "maximin_objectives": values.maximin_objectives.tolist(),
    }
    return policy, meta


def cmd_validate(args):
    model, constraint = _read_model(args.model)
    report = validate_model(model)
    print(report)
    if report.ok and constraint is not None:
        print(f"density caps: {constraint.n} entries summing to {float(constraint.d.sum())!r}")
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_synth(args):
    model, constraint = _read_valid_model(args.model)
    model = apply_discount(model)
    if args.mode != "unconstrained" and constraint is None:
        raise CliError(EXIT_USAGE, f"mode {args.mode} needs density caps 'd' in the model file")
    x1 = _start_vector(args, model.n)
    try:
        policy, meta = _synthesize(args.mode, model, constraint, _solver_options(args))
    except InfeasibleStageError as exc:
        raise CliError(EXIT_INFEASIBLE, str(exc)) from None
    except SynthesisError as exc:
        raise CliError(EXIT_INFEASIBLE, str(exc)) from None
    if x1 is not None and "u" in meta:
        if constraint.contains(x1):
            meta["lower_bound_at"] = {"x1": x1.tolist(), "value": float(x1 @ np.asarray(meta["u"][0]))}
        else:
            print("warning: start distribution violates the caps; no lower bound recorded", file=sys.stderr)
    save_policy(args.out, policy, meta)
    print(f"wrote {args.mode} policy to {args.out}")
    return EXIT_OK


def cmd_simulate(args):
    model, constraint = _read_valid_model(args.model)
    model = apply_discount(model)
    try:
        policy, meta = load_policy(args.policy)
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot read {args.policy}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_USAGE, f"{args.policy}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except ModelFormatError as exc:
        raise CliError(EXIT_USAGE, f"{args.policy}: {exc}") from None
    try:
        policy.check(model)
    except ValueError as exc:
        raise CliError(EXIT_MISMATCH, f"policy does not fit the model: {exc}") from None
    if args.rollouts < 0:
        raise CliError(EXIT_USAGE, "--rollouts must be nonnegative")
    x1 = _start_vector(args, model.n)
    if x1 is None:
        raise CliError(EXIT_USAGE, "give --start-state or --start-file")

    traj = density.propagate(model, policy, x1, constraint)
    exact = density.expected_reward(model, policy, x1)
    own_bound = None
    if "u" in meta:
        u1 = np.asarray(meta["u"][0], dtype=float)
        if u1.shape == (model.n,) and (constraint is None or constraint.contains(x1)):
            own_bound = float(x1 @ u1)

    mode = meta.get("mode")
    curves = {m: None for m in MODES}
    if mode in curves:
        curves[mode] = np.cumsum(density.stage_rewards(model, policy, x1))
    bound_curve = own_bound if mode == "constrained" else None
    if args.compare:
        for other in MODES:
            if curves[other] is not None or (other != "unconstrained" and constraint is None):
                continue
            try:
                p_other, m_other = _synthesize(other, model, constraint, _solver_options(args))
            except SynthesisError:
                continue
            curves[other] = np.cumsum(density.stage_rewards(model, p_other, x1))
            if other == "constrained" and constraint.contains(x1):
                bound_curve = float(x1 @ np.asarray(m_other["u"][0]))
    if bound_curve is None:
        bound_curve = own_bound

    prefix = args.out_prefix
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    density.write_trajectory_csv(f"{prefix}_trajectory.csv", traj)
    density.write_reward_csv(f"{prefix}_rewards.csv", curves, bound_curve, model.horizon)
    summary = {
        "expected_reward": exact,
        "lower_bound": own_bound,
        "violations": len(traj.violations),
        "violation_details": [
            {"t": t, "state": s, "density": v, "cap": c} for t, s, v, c in traj.violations
        ],
    }
    if args.rollouts > 0:
        summary["mc_mean"], summary["mc_stderr"] = density.monte_carlo(model, policy, x1, args.rollouts, args.seed)
        summary["rollouts"] = args.rollouts
        summary["seed"] = args.seed
    Path(f"{prefix}_summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({k: summary[k] for k in summary if k != "violation_details"}))
    return EXIT_OK


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_grid(args):
    try:
        if args.paper:
            model, constraint = gridworld.paper_instance(args.epsilon, args.horizon)
        else:
            spec = gridworld.GridSpec(
                args.rows, args.cols, args.epsilon, args.stage_rewards, args.terminal_rewards, args.caps, args.horizon
            )
            model, constraint = gridworld.build_grid(spec)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    save_model(args.out, model, constraint)
    print(f"wrote {model.n}-state grid model to {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cmdpsynth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    def start_options(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--start-state", type=int, help="zero-based state holding all initial mass")
        g.add_argument("--start-file", help="JSON array with the initial distribution")

    def solver_options(p):
        p.add_argument("--pivot-tol", type=float, default=PIVOT_TOL)
        p.add_argument("--feas-tol", type=float, default=FEAS_TOL)

    p = sub.add_parser("synth", help="synthesize a policy")
    p.add_argument("model")
    p.add_argument("--mode", choices=MODES, default="constrained")
    p.add_argument("-o", "--out", required=True)
    start_options(p)
    solver_options(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="propagate, audit and sample a policy")
    p.add_argument("model")
    p.add_argument("policy")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--rollouts", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-compare", dest="compare", action="store_false",
                   help="skip synthesizing the other modes for the reward-curve CSV")
    start_options(p)
    solver_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="write a grid-navigation model")
    p.add_argument("--rows", type=int, default=3)
    p.add_argument("--cols", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--horizon", type=int, default=20)
    p.add_argument("--stage-rewards", type=_floats)
    p.add_argument("--terminal-rewards", type=_floats)
    p.add_argument("--caps", type=_floats)
    p.add_argument("--paper", action="store_true", help="the 3x3 swarm example (ignores size and reward options)")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
