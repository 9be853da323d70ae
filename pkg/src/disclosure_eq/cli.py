"""Command-line surface for the disclosure-equilibrium toolkit.

Subcommands
-----------
validate CONFIG
    Check a game config against every model invariant; exit 0 when valid,
    exit 2 naming the first offending field otherwise.
solve {finite,limit} CONFIG
    Run the matching solver and write its CSV artifacts plus a run manifest
    into the output directory.
converge CONFIG
    Run the discretization ladder and the density-width shrink experiment
    for a continuum config; writes convergence and width CSVs.
simulate CONFIG
    Monte-Carlo calibration/welfare run against a prior ``solve finite``
    artifact in the same output directory (exit 4 when it is missing).

Exit codes: 0 success, 2 config error, 3 solver failure, 4 missing
upstream artifact. Every output directory receives a ``manifest.json``
recording the command, config, seed, and overrides, so a run can be
reproduced bitwise from its artifacts alone. The ``DISCLOSURE_EQ_MAX_TYPES``
environment variable overrides the type-enumeration cap.

Config arguments accept a filesystem path or the bare name of a shipped
example config (``example1a``, ``example1b``, ``example2``,
``example2_modified``, ``dye_micro``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .converge import (
    convergence_curve,
    emit_convergence_csv,
    emit_width_csv,
    variance_shrink_experiment,
)
from .finite import (
    SolverError,
    emit_outcome_csv,
    emit_pool_summary_csv,
    load_outcome_csv,
    solve_truth_leaning,
)
from .game import GameValidationError, load_game, validate_game
from .limit import (
    LimitGame,
    bayes_gap,
    emit_frontier_csv,
    emit_payoff_csv,
    emit_thresholds_csv,
    thresholds,
)
from .converge import solve_limit_auto
from .simulate import SimConfig, emit_calibration_csv, emit_welfare_csv, simulate

__all__ = [
    "MissingArtifactError",
    "RunManifest",
    "cmd_converge",
    "cmd_simulate",
    "cmd_solve",
    "cmd_validate",
    "main",
]

#: recognized --tol override keys and the operations they feed
_TOL_KEYS = {"thresholds"}

_DEFAULT_SEED = 42
_DEFAULT_REPS = 100_000


class MissingArtifactError(RuntimeError):
    """A command needs an artifact from an earlier pipeline stage."""


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run's outputs bitwise."""

    command: tuple[str, ...]
    config_path: str
    out_dir: str
    seed: int | None = None
    reps: int | None = None
    workers: int | None = None
    n_ladder: tuple[int, ...] | None = None
    grid: int | None = None
    tol_overrides: dict[str, float] = dataclasses.field(default_factory=dict)
    max_types_cap: int | None = None
    version: str = __version__

    def write(self, path) -> None:
        data = dataclasses.asdict(self)
        data["command"] = list(self.command)
        if self.n_ladder is not None:
            data["n_ladder"] = list(self.n_ladder)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Argument plumbing


def _resolve_config(arg: str) -> Path:
    """Filesystem path, or the name of a shipped example config."""
    p = Path(arg)
    if p.is_file():
        return p
    name = arg[:-5] if arg.endswith(".json") else arg
    if name.isidentifier():
        ref = resources.files("disclosure_eq") / "configs" / f"{name}.json"
        if ref.is_file():
            return Path(str(ref))
    raise GameValidationError("$", f"config not found: {arg}")


def _load_config_dict(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise GameValidationError(
                "$", f"{path}: invalid JSON at line {e.lineno}, "
                f"column {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise GameValidationError("$", f"{path}: config must be a mapping")
    return raw


def _default_out(config: Path) -> Path:
    return Path.cwd() / f"{config.stem}_out"


def _parse_seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _parse_n_list(text: str) -> tuple[int, ...]:
    try:
        ladder = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list: {text!r}")
    if not ladder or any(n < 1 for n in ladder):
        raise argparse.ArgumentTypeError("size list needs positive integers")
    if list(ladder) != sorted(set(ladder)):
        raise argparse.ArgumentTypeError("size list must be strictly increasing")
    return ladder


def _parse_tols(items) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise GameValidationError("tol", f"expected NAME=VALUE, got {item!r}")
        if key not in _TOL_KEYS:
            raise GameValidationError(
                "tol", f"unknown tolerance {key!r} (recognized: "
                f"{', '.join(sorted(_TOL_KEYS))})")
        try:
            out[key] = float(val)
        except ValueError:
            raise GameValidationError("tol", f"bad value for {key}: {val!r}")
    return out


def _env_cap() -> int | None:
    raw = os.environ.get("DISCLOSURE_EQ_MAX_TYPES")
    return int(raw) if raw is not None else None


def _prepare_out(args) -> Path:
    out = Path(args.out) if args.out else _default_out(args.config_path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate(args) -> int:
    cfg = _load_config_dict(args.config_path)
    game = validate_game(cfg)
    print(f"ok: {cfg.get('name', args.config_path.stem)} "
          f"(kind={game.kind}, states={game.J}, outcomes={game.D})")
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config_dict(args.config_path)
    game = validate_game(cfg)
    if game.kind != args.kind:
        raise GameValidationError(
            "mass", f"config is a {game.kind} game, not {args.kind}")
    tol = _parse_tols(args.tol)
    out = _prepare_out(args)
    manifest = RunManifest(
        command=tuple(args.argv), config_path=str(args.config_path),
        out_dir=str(out), grid=args.grid, tol_overrides=tol,
        max_types_cap=_env_cap())

    if args.kind == "finite":
        outcome = solve_truth_leaning(game)
        emit_outcome_csv(outcome, out / "outcome.csv")
        emit_pool_summary_csv(outcome, out / "pools.csv")
        manifest.write(out / "manifest.json")
        vals = [s.value for s in outcome.steps]
        print(f"finite solve: {len(outcome.steps)} pools over "
              f"{int(sum(len(m) for m in outcome.member_idx))} types")
        print(f"  values: top {vals[0]:.6g}, bottom {vals[-1]:.6g}")
        head = ", ".join(f"{v:.6g}" for v in vals[:8])
        print(f"  first pool values: {head}" + (" ..." if len(vals) > 8 else ""))
    else:
        lg = LimitGame.from_config(cfg)
        sol = solve_limit_auto(lg)
        emit_payoff_csv(sol, out / "payoff_curve.csv", n_grid=args.grid or 1000)
        emit_frontier_csv(sol, out / "frontier.csv")
        emit_thresholds_csv(sol, out / "thresholds.csv")
        manifest.write(out / "manifest.json")
        tab = thresholds(sol, tol=tol.get("thresholds", 1e-9))
        segs = [len(c.segments) for c in sol.curves.curves]
        print(f"limit solve: bottom value {sol.bottom_value:.6g}, "
              f"segments per state {segs}")
        print(f"  bayes gap {bayes_gap(sol):.3g}")
        for j in range(lg.n_states):
            print(f"  state {j}: z**={tab.z_star_star[j]:.6g} "
                  f"z*={tab.z_star[j]:.6g}")
    print(f"artifacts in {out}")
    return 0


def cmd_converge(args) -> int:
    cfg = _load_config_dict(args.config_path)
    game = validate_game(cfg)
    if game.kind != "limit":
        raise GameValidationError("mass", "converge needs a density-mass config")
    out = _prepare_out(args)
    ladder = args.N or (10, 20, 40, 80)
    kwargs = {}
    if args.grid:
        import numpy as np
        kwargs["mus"] = tuple(np.linspace(0.1, 0.9, args.grid))
    report = convergence_curve(cfg, n_ladder=ladder, **kwargs)
    emit_convergence_csv(report, out / "convergence.csv")
    width = variance_shrink_experiment(cfg)
    emit_width_csv(width, out / "width_ladder.csv")
    RunManifest(
        command=tuple(args.argv), config_path=str(args.config_path),
        out_dir=str(out), n_ladder=tuple(ladder), grid=args.grid,
        max_types_cap=_env_cap()).write(out / "manifest.json")
    print("discretization ladder:")
    for entry in report.entries:
        print(f"  N={entry.N:>4}  sup_error={entry.sup_error:.6g}  "
              f"runtime_ms={entry.runtime_ms:.1f}")
    print("  strictly decreasing:", report.strictly_decreasing())
    print("width ladder sup gaps:",
          " ".join(f"{g:.6g}" for g in width.sup_gaps),
          f"(nonincreasing: {width.nonincreasing()})")
    print(f"artifacts in {out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config_dict(args.config_path)
    game = validate_game(cfg)
    if game.kind != "finite":
        raise GameValidationError("mass", "simulate needs a finite-mass config")
    out = Path(args.out) if args.out else _default_out(args.config_path)
    artifact = out / "outcome.csv"
    if not artifact.is_file():
        raise MissingArtifactError(
            f"{artifact} not found; run `solve finite` with the same "
            f"config and output directory first")
    outcome = load_outcome_csv(game, artifact)
    sim_cfg = SimConfig(replications=args.reps, master_seed=args.seed,
                        workers=args.workers)
    report = simulate(game, outcome, sim_cfg)
    emit_calibration_csv(report, out / "calibration.csv")
    emit_welfare_csv(report, out / "welfare.csv")
    RunManifest(
        command=tuple(args.argv), config_path=str(args.config_path),
        out_dir=str(out), seed=args.seed, reps=args.reps,
        workers=args.workers,
        max_types_cap=_env_cap()).write(out / "manifest.json")
    n_bad = sum(not b.within() for b in report.buckets)
    print(f"simulated {args.reps} replications over {len(report.buckets)} "
          f"on-path announcements (seed {args.seed})")
    print(f"  worst calibration |z| = {report.worst_bucket_z():.3f}; "
          f"{n_bad} bucket(s) outside 3 standard errors")
    print(f"  mean sender payoff {report.mean_payoff:.6f} "
          f"± {report.mean_payoff_stderr:.6f} "
          f"(prior mean {report.prior_mean:.6f})")
    print(f"  receiver mse {report.receiver_mse:.6f} "
          f"(full-information floor {report.receiver_mse_floor:.6f})")
    print(f"artifacts in {out}")
    return 0 if n_bad == 0 else 3


# ---------------------------------------------------------------------------
# Parser / entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disclosure-eq",
        description="Equilibrium solvers, convergence harness, and simulator "
                    "for verifiable-disclosure games.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("validate", help="check a config against the model")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve and emit equilibrium artifacts")
    p.add_argument("kind", choices=("finite", "limit"))
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default ./CONFIG_out)")
    p.add_argument("--grid", type=int,
                   help="payoff-curve grid resolution (limit solve)")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="tolerance override, e.g. thresholds=1e-7")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge",
                       help="discretization ladder + width-shrink experiment")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default ./CONFIG_out)")
    p.add_argument("--N", type=_parse_n_list, metavar="N1,N2,...",
                   help="comma-separated discretization sizes")
    p.add_argument("--grid", type=int,
                   help="number of mass-level probes per state")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("simulate",
                       help="Monte-Carlo calibration against a finite solve")
    p.add_argument("config")
    p.add_argument("--out", help="directory holding the solve artifacts")
    p.add_argument("--reps", type=int, default=_DEFAULT_REPS,
                   help=f"replication count (default {_DEFAULT_REPS})")
    p.add_argument("--seed", type=_parse_seed, default=_DEFAULT_SEED,
                   help=f"64-bit master seed (default {_DEFAULT_SEED})")
    p.add_argument("--workers", type=int, default=1,
                   help="worker threads (results are worker-count invariant)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    args.argv = [args.cmd] + [a for a in argv if a != args.cmd]
    try:
        if hasattr(args, "config"):
            args.config_path = _resolve_config(args.config)
        return args.func(args)
    except GameValidationError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except MissingArtifactError as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return 4
    except (SolverError, AssertionError, ArithmeticError, RuntimeError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
