"""Command-line entry point: ``sdfuzz run | targets | triage | replay``.

Exit codes: 0 success, 1 internal error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

from .campaign import CampaignConfig, run_campaign
from .corpus import DEFAULT_MAX_INPUT_BYTES, SchedulerParams
from .errors import (
    BacktraceParseError,
    ConfigError,
    ContractError,
    GeneratorConfigError,
    StoreError,
    ValidationError,
)
from .feedback import ContextLimits
from .generator import Backend
from .targets import get_target, list_targets, run_target
from .triage import DEFAULT_STACK_DEPTH, parse_backtrace_text, to_crash_vector

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit code 2, same as argparse, but catchable
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdfuzz", description="Closed-loop structure-aware fuzzing on bundled toy targets.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a fuzzing campaign")
    run.add_argument("--target", required=True)
    run.add_argument("--budget-execs", type=int, default=200_000)
    run.add_argument("--budget-secs", type=float, default=None)
    run.add_argument("--alpha", type=float, default=1.0, help="score weight of new edges")
    run.add_argument("--beta", type=float, default=0.5, help="score weight of new blocks")
    run.add_argument("--gen-interval", type=int, default=10_000, help="executions between generator calls")
    run.add_argument("--backend", choices=("mock", "remote"), default="mock")
    run.add_argument("--no-generator", action="store_true")
    run.add_argument("--no-crash-feedback", action="store_true")
    run.add_argument("--no-mutation-opt", action="store_true")
    run.add_argument("--seed-dir", default=None, help="initial corpus directory")
    run.add_argument("--out", default="out")
    run.add_argument("--rng-seed", type=int, default=1)
    run.add_argument("--record-transcripts", action="store_true")
    run.add_argument("--endpoint-config", default=None, metavar="PATH")
    run.add_argument("--num-seeds", type=int, default=16, help="candidates per generator call")
    run.add_argument("--diversity", type=float, default=0.5)
    run.add_argument("--max-feedback", type=int, default=ContextLimits.max_feedback)
    run.add_argument("--prompt-budget", type=int, default=ContextLimits.prompt_budget_chars)
    run.add_argument("--k-stack-depth", type=int, default=DEFAULT_STACK_DEPTH)
    run.add_argument("--max-input-bytes", type=int, default=DEFAULT_MAX_INPUT_BYTES)
    run.add_argument("--clock", choices=("wall", "virtual"), default="wall",
                     help="virtual derives time from the exec counter, for replayable reports")
    run.add_argument("--stop-on-all-canaries", action="store_true")

    tg = sub.add_parser("targets", help="list bundled targets and their canaries")
    tg.add_argument("--json", action="store_true")

    tr = sub.add_parser("triage", help="parse a debugger backtrace into a crash vector")
    tr.add_argument("file")
    tr.add_argument("--target", default=None, help="target name (default: stem of the first source file in the trace)")
    tr.add_argument("-k", type=int, default=DEFAULT_STACK_DEPTH, help="stack hash depth")

    rp = sub.add_parser("replay", help="run one input against a target")
    rp.add_argument("--target", required=True)
    rp.add_argument("file")
    rp.add_argument("--json", action="store_true")
    return p


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        params = SchedulerParams(args.alpha, args.beta)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    config = CampaignConfig(
        target_name=args.target,
        exec_budget=args.budget_execs,
        budget_secs=args.budget_secs,
        out_dir=args.out,
        corpus_in=args.seed_dir,
        gen_interval=args.gen_interval,
        params=params,
        use_generator=not args.no_generator,
        use_crash_feedback=not args.no_crash_feedback,
        use_mutation_optimization=not args.no_mutation_opt,
        generator_backend=Backend.REMOTE if args.backend == "remote" else Backend.MOCK,
        rng_seed=args.rng_seed,
        k_stack_depth=args.k_stack_depth,
        max_input_bytes=args.max_input_bytes,
        num_seeds=args.num_seeds,
        diversity=args.diversity,
        limits=ContextLimits(max_feedback=args.max_feedback, prompt_budget_chars=args.prompt_budget),
        endpoint_config=args.endpoint_config,
        record_transcripts=args.record_transcripts,
        clock=args.clock,
        stop_on_all_canaries=args.stop_on_all_canaries,
    )
    report = run_campaign(config)
    print(f"target {report.target}: {report.total_execs} execs, {report.rounds} rounds, "
          f"{report.edges_total} edges, {report.crash_group_count} crash groups")
    for b in report.bug_coverage:
        print(f"  {b.canary_id}  first at exec {b.first_exec_counter} ({b.first_wall_ms} ms)")
    for note in report.notes:
        print(f"  note: {note}")
    print(f"report written to {Path(args.out) / 'report'}")
    return EXIT_OK


def _cmd_targets(args: argparse.Namespace) -> int:
    targets = list_targets()
    if args.json:
        doc = [
            {
                "name": t.name,
                "block_count": t.block_count,
                "canaries": [
                    {"canary_id": c.canary_id, "bug_class": c.bug_class.value,
                     "trigger_condition": c.trigger_condition}
                    for c in t.canary_catalog
                ],
            }
            for t in targets
        ]
        print(json.dumps(doc, indent=2))
        return EXIT_OK
    for t in targets:
        print(f"{t.name}  ({t.block_count} blocks)")
        for c in t.canary_catalog:
            print(f"  {c.canary_id}  {c.bug_class.value:<16}  {c.trigger_condition}")
    return EXIT_OK


def _cmd_triage(args: argparse.Namespace) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise ConfigError(f"cannot read {args.file}: {exc.strerror}") from exc
    artifact = parse_backtrace_text(text, args.target)
    print(json.dumps(to_crash_vector(artifact, args.k).to_dict(), indent=2))
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    target = get_target(args.target)
    try:
        data = Path(args.file).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.file}: {exc.strerror}") from exc
    res = run_target(target, data)
    art = res.artifact
    if args.json:
        print(json.dumps({
            "status": res.status.value,
            "exec_trace_len": res.exec_trace_len,
            "edges": res.local_coverage.edge_count,
            "blocks": res.local_coverage.block_count,
            "detail": res.detail,
            "artifact": None if art is None else art.to_dict(),
        }, indent=2))
        return EXIT_OK
    line = f"{res.status.value}"
    if art is not None:
        line += f" {art.signal.value}"
        if art.canary_id:
            line += f" {art.canary_id}"
        line += f" at {art.fault_ip}"
    elif res.detail:
        line += f": {res.detail}"
    print(line)
    print(f"trace length {res.exec_trace_len}, {res.local_coverage.edge_count} edges, "
          f"{res.local_coverage.block_count} blocks")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "targets": _cmd_targets, "triage": _cmd_triage, "replay": _cmd_replay}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ContractError, GeneratorConfigError, BacktraceParseError) as exc:
        print(f"sdfuzz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StoreError as exc:
        print(f"sdfuzz: I/O error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001 - last-resort handler for the exit-code contract
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
