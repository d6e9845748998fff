"""Command-line interface.

Three subcommands: `run-toy` drives seeded training runs over the toy
objective (the full nine-combination benchmark grid by default, or a
single configuration when both --optimizer and --projection are given),
`memory-table` prints the slot accounting and crossover ranks for a set
of layer shapes, and `selfcheck` runs the invariant suites.

Human-readable tables go to standard output; machine-readable CSV is
written only when --out is given. Exit codes: 0 success, 1 usage or
configuration error, 2 runtime or numeric failure.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from typing import Any, Sequence

from . import selfcheck
from .errors import (
    ConfigError,
    DivergenceError,
    GridError,
    LowRankGradError,
)
from .harness import (
    DEFAULT_LEARNING_RATES,
    FAST_PROFILE,
    FULL_PROFILE,
    ExperimentConfig,
    RunResult,
    run_grid,
    write_results_csv,
)
from .lowrank import ProjectionMethod
from .memory import (
    BYTES_PER_SLOT_F32,
    BYTES_PER_SLOT_F64,
    crossover_rank,
    full_rank_memory,
    low_rank_memory,
)
from .optimizers import AdamBiasMode, OptimizerKind, OptimizerSpec

DEFAULT_SEEDS = (1, 2, 3, 4, 5)
DEFAULT_REPORT_EVERY = 1000

_BIAS_MODES = {"standard": AdamBiasMode.STANDARD, "paper": AdamBiasMode.SWAPPED}

_RUN_CONFIG_KEYS = {
    "dim", "rank", "steps", "seed", "optimizer", "projection",
    "learning_rate", "report_every", "reset_factor_state_each_step",
    "adam_bias_mode", "fast",
}
_MEMORY_CONFIG_KEYS = {"layers", "ranks", "bytes_per_slot"}

_DEFAULT_RANK_SWEEP = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1, not 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="lowrankgrad",
        description="Low-rank gradient training benchmarks and memory accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run-toy", help="train on the toy objective")
    run.add_argument("--config", metavar="PATH", help="JSON config file; flags override its values")
    run.add_argument("--out", metavar="PATH", help="write per-record CSV here")
    run.add_argument("--dim", type=int, help="square weight dimension D")
    run.add_argument("--rank", type=int, help="projection rank R")
    run.add_argument("--steps", type=int, help="training steps per run")
    run.add_argument("--seed", type=int, help="single seed (default: seeds 1..5 for the grid)")
    run.add_argument("--optimizer", choices=[k.value for k in OptimizerKind])
    run.add_argument("--projection", choices=[p.value for p in ProjectionMethod])
    run.add_argument("--lr", type=float, help="learning rate override for every run")
    run.add_argument("--fast", action="store_true",
                     help=f"fast profile: D={FAST_PROFILE['dim']}, {FAST_PROFILE['steps']} steps")
    run.add_argument("--adam-bias-mode", choices=sorted(_BIAS_MODES),
                     help="adam bias handling: 'standard' corrections or the "
                          "'paper' variant with swapped correction factors")
    run.add_argument("--reset-factor-state", action="store_true",
                     help="re-zero factor optimizer state every step")
    run.set_defaults(handler=_cmd_run_toy)

    mem = sub.add_parser("memory-table", help="slot accounting for layer shapes")
    mem.add_argument("--config", metavar="PATH",
                     help='JSON config: {"layers": [[m, n], ...], "ranks": [...], "bytes_per_slot": 8}')
    mem.add_argument("--out", metavar="PATH", help="write the table as CSV here")
    mem.add_argument("--dim", type=int, action="append",
                     help="square layer dimension; repeat for several layers")
    mem.set_defaults(handler=_cmd_memory_table)

    chk = sub.add_parser("selfcheck", help="run the invariant suites")
    chk.add_argument("--seed", type=int, default=0, help="seed for the random instances")
    chk.set_defaults(handler=_cmd_selfcheck)

    return parser


def _load_json(path: str, allowed: set[str]) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {', '.join(unknown)}")
    return data


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _as_choice(value: Any, key: str, choices: Sequence[str]) -> str:
    if value not in choices:
        raise ConfigError(f"{key} must be one of {', '.join(choices)}, got {value!r}")
    return value


def _pick(flag_value, conf: dict, key: str, caster):
    """Flag wins over file value; None means unresolved."""
    if flag_value is not None:
        return flag_value
    if key in conf:
        return caster(conf[key], key)
    return None


def _cmd_run_toy(args) -> int:
    conf = _load_json(args.config, _RUN_CONFIG_KEYS) if args.config else {}

    fast = args.fast or bool(conf.get("fast", False))
    profile = FAST_PROFILE if fast else FULL_PROFILE
    dim = _pick(args.dim, conf, "dim", _as_int) or profile["dim"]
    rank = _pick(args.rank, conf, "rank", _as_int) or profile["rank"]
    steps = _pick(args.steps, conf, "steps", _as_int) or profile["steps"]
    seed = _pick(args.seed, conf, "seed", _as_int)
    report_every = _pick(None, conf, "report_every", _as_int) or DEFAULT_REPORT_EVERY

    optimizer_name = _pick(
        args.optimizer, conf, "optimizer",
        lambda v, k: _as_choice(v, k, [x.value for x in OptimizerKind]),
    )
    projection_name = _pick(
        args.projection, conf, "projection",
        lambda v, k: _as_choice(v, k, [p.value for p in ProjectionMethod]),
    )
    bias_name = _pick(
        args.adam_bias_mode, conf, "adam_bias_mode",
        lambda v, k: _as_choice(v, k, sorted(_BIAS_MODES)),
    ) or "standard"
    lr_override = args.lr if args.lr is not None else conf.get("learning_rate")
    if lr_override is not None and not isinstance(lr_override, (int, float)):
        raise ConfigError(f"learning_rate must be a number, got {lr_override!r}")
    reset = args.reset_factor_state or bool(conf.get("reset_factor_state_each_step", False))

    single = optimizer_name is not None and projection_name is not None
    kinds = [OptimizerKind(optimizer_name)] if optimizer_name else list(OptimizerKind)
    projections = (
        [ProjectionMethod(projection_name)] if projection_name else list(ProjectionMethod)
    )
    if seed is not None:
        seeds: tuple[int, ...] = (seed,)
    elif single:
        seeds = (DEFAULT_SEEDS[0],)
    else:
        seeds = DEFAULT_SEEDS

    configs = []
    for kind in kinds:
        lr = float(lr_override) if lr_override is not None else DEFAULT_LEARNING_RATES[kind]
        spec = OptimizerSpec(kind=kind, learning_rate=lr, adam_bias_mode=_BIAS_MODES[bias_name])
        for projection in projections:
            for s in seeds:
                configs.append(
                    ExperimentConfig(
                        dim=dim,
                        rank=rank,
                        steps=steps,
                        optimizer=spec,
                        projection=projection,
                        seed=s,
                        report_every=report_every,
                        reset_factor_state_each_step=reset,
                    )
                )

    results = run_grid(configs)
    _print_run_summary(results)
    if args.out:
        write_results_csv(results, args.out)
        print(f"wrote {sum(len(r.records) for r in results)} records to {args.out}")
    return 0


def _print_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    widths = [
        max(len(header[i]), max((len(row[i]) for row in rows), default=0))
        for i in range(len(header))
    ]
    print("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip())
    for row in rows:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())


def _print_run_summary(results: Sequence[RunResult]) -> None:
    rows = [
        (
            r.config.optimizer.kind.value,
            r.config.projection.value,
            str(r.config.seed),
            f"{r.final_loss:.6g}",
            f"{r.total_wall_time:.3f}",
        )
        for r in results
    ]
    _print_table(("optimizer", "projection", "seed", "final_loss", "time_s"), rows)

    groups: dict[tuple[str, str], list[RunResult]] = {}
    for r in results:
        key = (r.config.optimizer.kind.value, r.config.projection.value)
        groups.setdefault(key, []).append(r)
    if any(len(members) > 1 for members in groups.values()):
        print()
        print("medians over seeds")
        rows = [
            (
                opt,
                proj,
                f"{statistics.median(r.final_loss for r in members):.6g}",
                f"{statistics.median(r.total_wall_time for r in members):.3f}",
            )
            for (opt, proj), members in groups.items()
        ]
        _print_table(("optimizer", "projection", "final_loss", "time_s"), rows)


def _cmd_memory_table(args) -> int:
    conf = _load_json(args.config, _MEMORY_CONFIG_KEYS) if args.config else {}

    if args.dim:
        layers = [(d, d) for d in args.dim]
    elif "layers" in conf:
        raw = conf["layers"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("layers must be a non-empty list of [m, n] pairs")
        layers = []
        for entry in raw:
            if not isinstance(entry, list) or len(entry) != 2:
                raise ConfigError(f"layer entry must be an [m, n] pair, got {entry!r}")
            layers.append((_as_int(entry[0], "layer dim"), _as_int(entry[1], "layer dim")))
    else:
        raise ConfigError("no layers given; use --dim or a config file with layers")

    max_rank = min(min(m, n) for m, n in layers)
    if "ranks" in conf:
        ranks = [_as_int(r, "rank") for r in conf["ranks"]]
    else:
        ranks = [r for r in _DEFAULT_RANK_SWEEP if r <= max_rank]
    bytes_per_slot = conf.get("bytes_per_slot", BYTES_PER_SLOT_F64)
    if bytes_per_slot not in (BYTES_PER_SLOT_F32, BYTES_PER_SLOT_F64):
        raise ConfigError(f"bytes_per_slot must be 4 or 8, got {bytes_per_slot!r}")

    kinds = (OptimizerKind.MOMENTUM, OptimizerKind.ADAM)
    csv_rows = []
    for kind in kinds:
        full = full_rank_memory(layers, kind)
        for rank in ranks:
            low = low_rank_memory(layers, kind, rank)
            csv_rows.append((kind.value, "full", rank, full.total_slots,
                             full.total_bytes(bytes_per_slot)))
            csv_rows.append((kind.value, "lowrank", rank, low.total_slots,
                             low.total_bytes(bytes_per_slot)))

    _print_table(
        ("optimizer", "mode", "rank", "slots", "bytes"),
        [tuple(str(v) for v in row) for row in csv_rows],
    )
    print()
    for kind in kinds:
        try:
            print(f"crossover rank ({kind.value}): {crossover_rank(layers, kind)}")
        except ValueError:
            print(f"crossover rank ({kind.value}): none (no rank saves memory)")

    if args.out:
        lines = ["optimizer,mode,rank,slots,bytes"]
        lines += [",".join(str(v) for v in row) for row in csv_rows]
        try:
            with open(args.out, "w", encoding="ascii") as handle:
                handle.write("\n".join(lines) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write table to {args.out}: {exc}") from exc
        print(f"wrote {len(csv_rows)} rows to {args.out}")
    return 0


def _cmd_selfcheck(args) -> int:
    results = selfcheck.run_all(args.seed)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name}: {result.detail}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} suites failed", file=sys.stderr)
        return 2
    print(f"all {len(results)} suites passed")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        return args.handler(args)
    except GridError as exc:
        for index, config, error in exc.failures:
            print(
                f"error: run {index} ({config.optimizer.kind.value}/"
                f"{config.projection.value}, seed {config.seed}): {error}",
                file=sys.stderr,
            )
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LowRankGradError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
