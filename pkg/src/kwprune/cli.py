"""Command-line front door: simulate, compare, gen-synthetic, validate.

Exit codes: 0 success, 1 usage or configuration problems, 2 data
invariant failures, 3 gateway failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from decimal import InvalidOperation
from pathlib import Path

from . import config as settings
from .data import (
    generate_synthetic_log,
    ingest_log,
    log_digest,
    money,
    scan_log,
    write_log_csv,
)
from .errors import (
    CorruptStore,
    DataError,
    GatewayError,
    InvalidConfig,
    InvariantViolation,
    KwpruneError,
)
from .gateway import LiveBackend, ScriptedBackend
from .memory import MemoryStore, persist_store
from .policies import POLICY_NAMES
from .report import render_comparison_figure, render_run_figure
from .simulator import (
    RESPONSE_MODELS,
    SimulationAborted,
    manifest_dict,
    run_experiment,
    summarize,
    write_manifest,
    write_summary_csv,
    write_trace_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_GATEWAY = 3

PLOT_DATA_HEADER = ("n_min", "policy", "day", "daily_profit", "cumulative_profit")
UPLIFT_HEADER = ("n_min", "policy", "final_cumulative", "uplift_pct")


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, matching the config-error path
    def error(self, message):
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _bool_arg(raw: str) -> bool:
    try:
        return settings.parse_bool(raw)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _money_arg(raw: str):
    try:
        return money(raw)
    except (InvariantViolation, InvalidOperation, ValueError) as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _names_arg(raw: str):
    try:
        return settings.parse_names(raw)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _ints_arg(raw: str):
    try:
        return settings.parse_ints(raw)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


# maps argparse dest -> (section, key) in the settings schema
_FLAG_MAP = {
    "n_min": ("simulation", "n_min"),
    "window": ("simulation", "window"),
    "start_day": ("simulation", "start_day"),
    "end_day": ("simulation", "end_day"),
    "policy": ("simulation", "policy"),
    "k_shot": ("simulation", "k_shot"),
    "prune_to": ("simulation", "prune_to"),
    "compound": ("simulation", "compound"),
    "same_campaign_only": ("simulation", "same_campaign_only"),
    "max_chars": ("simulation", "max_chars"),
    "max_repairs": ("simulation", "max_repairs"),
    "response": ("budget", "response"),
    "alpha": ("budget", "alpha"),
    "daily_budget": ("budget", "daily"),
    "policies": ("policy", "compare"),
    "sweep": ("policy", "sweep"),
    "script": ("llm", "script"),
    "script_repeat": ("llm", "repeat"),
    "endpoint": ("llm", "endpoint"),
    "model": ("llm", "model"),
    "input": ("paths", "input"),
    "out": ("paths", "out"),
    "campaigns": ("synthetic", "campaigns"),
    "keywords": ("synthetic", "keywords"),
    "days": ("synthetic", "days"),
    "skew_fraction": ("synthetic", "skew_fraction"),
    "skew_share": ("synthetic", "skew_share"),
    "noise": ("synthetic", "noise"),
    "budget": ("synthetic", "budget"),
}


def _overrides_from(args: argparse.Namespace) -> dict[tuple[str, str], object]:
    overrides: dict[tuple[str, str], object] = {}
    for dest, target in _FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[target] = value
    if getattr(args, "seed", None) is not None:
        overrides[("simulation", "seed")] = args.seed
        overrides[("synthetic", "seed")] = args.seed
    return overrides


def _add_simulation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="input log CSV path")
    parser.add_argument("--n-min", type=int, help="retention floor per campaign")
    parser.add_argument("--window", type=int, help="statistics window length in days")
    parser.add_argument("--start-day", type=int, help="first decision day")
    parser.add_argument("--end-day", type=int, help="last decision day")
    parser.add_argument(
        "--response", choices=RESPONSE_MODELS, help="budget response model"
    )
    parser.add_argument("--alpha", type=float, help="concave response exponent in (0, 1]")
    parser.add_argument(
        "--daily-budget", type=_money_arg, help="daily budget applied to every campaign"
    )
    parser.add_argument("--k-shot", type=int, help="examples retrieved per agent decision")
    parser.add_argument("--prune-to", type=int, help="daily retention target above the floor")
    parser.add_argument(
        "--compound", type=_bool_arg, metavar="BOOL",
        help="carry pruned sets forward day to day (default true)",
    )
    parser.add_argument(
        "--same-campaign-only", type=_bool_arg, metavar="BOOL",
        help="restrict memory retrieval to the deciding campaign",
    )
    parser.add_argument("--max-chars", type=int, help="character budget for retrieved examples")
    parser.add_argument("--max-repairs", type=int, help="plan repair attempts before fallback")
    parser.add_argument("--script", help="scripted gateway responses (JSONL)")
    parser.add_argument(
        "--script-repeat", type=_bool_arg, metavar="BOOL",
        help="cycle scripted responses instead of exhausting them (default true)",
    )
    parser.add_argument("--endpoint", help="live chat-completion endpoint URL")
    parser.add_argument("--model", help="model name sent to the live endpoint")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="kwprune",
        description="Replay keyword-pruning policies over campaign logs.",
    )
    parser.add_argument("--config", help="settings file ([section] key = value)")
    parser.add_argument("--out", help="output directory (default: out)")
    parser.add_argument("--jobs", type=int, default=1, help="concurrent agent decisions per day")
    parser.add_argument("--seed", type=int, help="seed recorded in manifests and used by gen-synthetic")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="replay one policy over a log")
    simulate.add_argument("--policy", choices=POLICY_NAMES, help="policy to replay")
    _add_simulation_flags(simulate)
    simulate.set_defaults(func=cmd_simulate)

    compare = commands.add_parser("compare", help="run several policies across an n_min sweep")
    compare.add_argument(
        "--policies", type=_names_arg, help="comma-separated policy names (at least two)"
    )
    compare.add_argument("--sweep", type=_ints_arg, help="comma-separated n_min values")
    _add_simulation_flags(compare)
    compare.set_defaults(func=cmd_compare)

    synth = commands.add_parser("gen-synthetic", help="write a synthetic campaign log")
    synth.add_argument("--campaigns", type=int, help="number of campaigns")
    synth.add_argument("--keywords", type=int, help="keywords per campaign")
    synth.add_argument("--days", type=int, help="log horizon in days")
    synth.add_argument("--skew-fraction", type=float, help="fraction of keywords carrying the profit")
    synth.add_argument("--skew-share", type=float, help="profit share of the top keywords")
    synth.add_argument("--noise", type=float, help="day-to-day jitter in [0, 1]")
    synth.add_argument("--budget", type=_money_arg, help="daily budget per campaign")
    synth.set_defaults(func=cmd_gen_synthetic)

    validate = commands.add_parser("validate", help="check a log file and report violations")
    validate.add_argument("log", help="log CSV path")
    validate.set_defaults(func=cmd_validate)

    return parser


def _out_dir(merged) -> Path:
    path = Path(merged["paths"]["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_log(merged):
    input_path = merged["paths"]["input"]
    if not input_path:
        raise InvalidConfig("an input log is required (--input or [paths] input)")
    return ingest_log(input_path, daily_budget=merged["budget"]["daily"])


def _backend_for(merged, needs_agent: bool):
    llm = merged["llm"]
    if llm["script"]:
        return ScriptedBackend.from_file(llm["script"], repeat=llm["repeat"])
    if llm["endpoint"]:
        return LiveBackend(
            llm["endpoint"],
            llm["model"],
            timeout_secs=llm["timeout_secs"],
            max_retries=llm["max_retries"],
        )
    if needs_agent:
        raise InvalidConfig(
            "the kp_agent policy needs a gateway: set [llm] script or [llm] endpoint"
        )
    return None


def cmd_simulate(args: argparse.Namespace) -> int:
    merged = settings.merged_settings(args.config, _overrides_from(args))
    sim_config = settings.simulation_config(merged)
    log = _load_log(merged)
    backend = _backend_for(merged, sim_config.policy == "kp_agent")
    memory = MemoryStore()
    out = _out_dir(merged)

    trace = run_experiment(
        log, sim_config, backend=backend, memory=memory, jobs=args.jobs
    )
    summary = summarize(trace)
    write_trace_csv(trace, out / "trace.csv")
    write_summary_csv(summary, out / "summary.csv")
    write_manifest(trace, out / "manifest.json")
    figure = render_run_figure(summary, out / "run.png")
    if memory.entries:
        persist_store(memory, out / "memory.jsonl")

    final = summary.series[-1]
    print(f"wrote {out / 'trace.csv'}, {out / 'summary.csv'}, {out / 'manifest.json'}, {figure}")
    print(
        f"{final.policy}: cumulative profit {final.cumulative_profit} "
        f"over days {sim_config.start_day}..{sim_config.end_day}"
    )
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    merged = settings.merged_settings(args.config, _overrides_from(args))
    base_config = settings.simulation_config(merged)
    policies = merged["policy"]["compare"]
    if len(policies) < 2:
        raise InvalidConfig("compare needs at least two policies")
    for name in policies:
        if name not in POLICY_NAMES:
            raise InvalidConfig(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
    sweep = settings.validate_sweep(merged["policy"]["sweep"] or (base_config.n_min,))
    log = _load_log(merged)
    needs_agent = "kp_agent" in policies
    out = _out_dir(merged)

    summaries: dict[int, object] = {}
    manifests = []
    for n_min in sweep:
        # fresh backend and memory per run: cursors and day counters restart
        backend = _backend_for(merged, needs_agent)
        trace = run_experiment(
            log,
            replace(base_config, n_min=n_min),
            policies,
            backend=backend,
            memory=MemoryStore(),
            jobs=args.jobs,
        )
        summaries[n_min] = summarize(trace)
        manifests.append(manifest_dict(trace))

    plot_path = out / "plot_data.csv"
    with open(plot_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLOT_DATA_HEADER)
        for n_min in sweep:
            for row in summaries[n_min].series:
                writer.writerow(
                    (n_min, row.policy, row.day, str(row.daily_profit), str(row.cumulative_profit))
                )

    uplift_path = out / "uplift.csv"
    with open(uplift_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(UPLIFT_HEADER)
        for n_min in sweep:
            for row in summaries[n_min].uplift:
                pct = "" if row.uplift_pct is None else f"{row.uplift_pct:.4f}"
                writer.writerow((n_min, row.policy, str(row.final_cumulative), pct))

    manifest_path = out / "manifest.json"
    payload = {
        "input_log_digest": log_digest(log),
        "policies": list(policies),
        "sweep": list(sweep),
        "runs": manifests,
    }
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    figure = render_comparison_figure(summaries, out / "comparison.png")
    print(f"wrote {plot_path}, {uplift_path}, {manifest_path}, {figure}")
    for n_min in sweep:
        reference = summaries[n_min].reference_policy
        finals = {u.policy: u.final_cumulative for u in summaries[n_min].uplift}
        print(f"n_min={n_min}: reference {reference}, final cumulative {finals[reference]}")
    return EXIT_OK


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    merged = settings.merged_settings(args.config, _overrides_from(args))
    synth_config = settings.synthetic_config(merged)
    log = generate_synthetic_log(synth_config)
    out = _out_dir(merged)
    path = out / "synthetic_log.csv"
    write_log_csv(log, path)
    unique = len({kw for c in log.campaigns.values() for kw in c.keywords})
    print(
        f"wrote {path}: {len(log.campaigns)} campaigns, {unique} unique keywords, "
        f"days {log.horizon[0]}..{log.horizon[1]}, digest {log_digest(log)[:12]}"
    )
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    log, problems = scan_log(args.log)
    if log is None:
        print("0 campaigns, 0 unique keywords")
        print("0 records")
    else:
        unique = len({kw for c in log.campaigns.values() for kw in c.keywords})
        print(f"{len(log.campaigns)} campaigns, {unique} unique keywords")
        print(f"{len(log.records)} records over days {log.horizon[0]}..{log.horizon[1]}")
    for problem in problems:
        print(str(problem))
    print(f"{len(problems)} violations")
    return EXIT_DATA if problems else EXIT_OK


def _exit_code_for(err: KwpruneError) -> int:
    if isinstance(err, GatewayError):
        return EXIT_GATEWAY
    if isinstance(err, (DataError, CorruptStore)):
        return EXIT_DATA
    return EXIT_USAGE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except SimulationAborted as err:
        print(f"kwprune: error: {err}", file=sys.stderr)
        cause = err.__cause__
        return _exit_code_for(cause) if isinstance(cause, KwpruneError) else EXIT_USAGE
    except KwpruneError as err:
        print(f"kwprune: error: {err}", file=sys.stderr)
        return _exit_code_for(err)
    except OSError as err:
        print(f"kwprune: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
