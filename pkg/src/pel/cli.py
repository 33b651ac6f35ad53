"""Command-line entry point: ``pel run | repl | grammar export | agents run``.

Exit codes: 0 success, 1 unresolved Pel error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .core import display
from .errors import MalformedOrg, PelException

EXIT_OK, EXIT_PEL, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    pass


def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {what} '{path}': {e.strerror or e}")


def make_backend(args):
    from .llm import HttpChat, MockScript, ScriptedMock

    if getattr(args, "llm", "mock") == "http":
        return HttpChat()
    script = getattr(args, "mock_script", None)
    if script is None:
        return ScriptedMock()
    try:
        return ScriptedMock(MockScript.parse(_read(script, "mock script")))
    except ValueError as e:
        raise ConfigError(str(e))


def load_caps(args):
    from .grammar import CapabilityConfig

    path = getattr(args, "caps", None)
    if path is None:
        return None
    _read(path, "caps file")
    try:
        return CapabilityConfig.load(path)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad caps file '{path}': {e}")


def load_answers(args) -> list[str] | None:
    if getattr(args, "answers", None) is None:
        return None
    return _read(args.answers, "answers file").splitlines()


def make_interp(args, out=None):
    from .evaluator import Interpreter

    interp = Interpreter(backend=make_backend(args), out=out, max_tasks=getattr(args, "jobs", None))
    org = None
    if getattr(args, "org", None):
        org = _load_org(args, args.org)
        org.install(interp)
    return interp, org


def _load_org(args, path: str, trace=None):
    from .agents import load_org

    _read(path, "org file")
    try:
        return load_org(
            path,
            async_mode=getattr(args, "async_mode", False),
            max_tasks=getattr(args, "jobs", None),
            trace=trace,
        )
    except MalformedOrg as e:
        raise ConfigError(f"bad org file '{path}': {e.message}")


def _emit_trace(trace, stream) -> None:
    if not trace:
        return
    t0 = min(ev.at for ev in trace)
    for ev in sorted(trace, key=lambda ev: ev.at):
        stream.write(json.dumps({"form": ev.index, "event": ev.kind, "ms": round((ev.at - t0) * 1000, 3)}) + "\n")


def cmd_run(args) -> int:
    from .repel import Session

    text = _read(args.file, "program")
    interp, _ = make_interp(args)
    trace: list | None = [] if args.trace_schedule else None
    answers = load_answers(args)
    session = Session(
        interp,
        out=sys.stdout,
        # without an answers file nobody can pick a restart: errors abort
        answers=answers if answers is not None else [],
        auto_heal=args.auto_heal,
        heal_cap=args.heal_cap,
        caps=load_caps(args),
        async_mode=args.async_mode,
        jobs=args.jobs,
        trace=trace,
        show_values=False,
    )
    status = session.run_source(text, name=args.file)
    if trace is not None:
        _emit_trace(trace, sys.stderr)
    if status == 0 and not args.quiet:
        print(display(session.last_value))
    return EXIT_OK if status == 0 else EXIT_PEL


def cmd_repl(args) -> int:
    from .repel import Session

    interp, _ = make_interp(args)
    answers = load_answers(args)
    if answers is None and not sys.stdin.isatty():
        answers = []
    session = Session(
        interp,
        out=sys.stdout,
        answers=answers,
        auto_heal=args.auto_heal,
        heal_cap=args.heal_cap,
        caps=load_caps(args),
        async_mode=args.async_mode,
        jobs=args.jobs,
    )
    return session.repl(sys.stdin)


def cmd_grammar_export(args) -> int:
    from .grammar import CapabilityConfig, export_ebnf, export_regex

    caps = load_caps(args) or CapabilityConfig()
    if args.format == "ebnf":
        sys.stdout.write(export_ebnf(caps))
    else:
        if args.depth < 1:
            raise ConfigError("--depth must be at least 1")
        try:
            sys.stdout.write(export_regex(caps, args.depth) + "\n")
        except PelException as e:
            print(f"error: {e.message}", file=sys.stderr)
            return EXIT_USAGE
    return EXIT_OK


def cmd_agents_run(args) -> int:
    from .evaluator import Interpreter

    trace: list | None = [] if args.trace_schedule else None
    interp = Interpreter(backend=make_backend(args), out=sys.stdout, max_tasks=args.jobs)
    org = _load_org(args, args.org_file, trace)
    org.install(interp)
    try:
        value = org.run_task(interp, args.task)
    except PelException as e:
        from .repel import render_error

        print(render_error(e), file=sys.stderr)
        return EXIT_PEL
    finally:
        if trace is not None:
            _emit_trace(trace, sys.stderr)
        if args.transcript:
            Path(args.transcript).write_text(org.transcript(), encoding="utf-8")
    print(display(value))
    return EXIT_OK


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--llm", choices=["mock", "http"], default="mock", help="LLM backend (default: mock)")
    p.add_argument("--mock-script", metavar="FILE", help="rules file for the mock backend")


def _exec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--async", dest="async_mode", action="store_true", help="run independent top-level forms concurrently")
    p.add_argument("--jobs", type=int, default=None, metavar="N", help="maximum concurrent tasks")


def _session_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--auto-heal", action="store_true", help="accept helper-agent fixes automatically")
    p.add_argument("--heal-cap", type=int, default=3, metavar="N", help="auto-heal proposals per form (default 3)")
    p.add_argument("--answers", metavar="FILE", help="scripted restart/heal answers, one per line")
    p.add_argument("--caps", metavar="FILE", help="capability config (TOML)")
    p.add_argument("--org", metavar="FILE", help="agent org JSON; registers agent paths as callables")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pel", description="Pel interpreter and tools")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate a .pel file")
    run.add_argument("file")
    _backend_flags(run)
    _exec_flags(run)
    _session_flags(run)
    run.add_argument("--trace-schedule", action="store_true", help="write start/finish events to stderr as JSON lines")
    run.add_argument("--quiet", action="store_true", help="do not print the final value")
    run.set_defaults(func=cmd_run)

    repl = sub.add_parser("repl", help="interactive REPeL")
    _backend_flags(repl)
    _exec_flags(repl)
    _session_flags(repl)
    repl.set_defaults(func=cmd_repl)

    grammar = sub.add_parser("grammar", help="grammar tools")
    gsub = grammar.add_subparsers(dest="grammar_command", required=True)
    export = gsub.add_parser("export", help="print the effective grammar")
    export.add_argument("--caps", metavar="FILE")
    export.add_argument("--format", choices=["ebnf", "regex"], default="ebnf")
    export.add_argument("--depth", type=int, default=3)
    export.set_defaults(func=cmd_grammar_export)

    agents = sub.add_parser("agents", help="agent organisation tools")
    asub = agents.add_subparsers(dest="agents_command", required=True)
    arun = asub.add_parser("run", help="give a task to the root agent")
    arun.add_argument("org_file", metavar="ORG")
    arun.add_argument("--task", required=True)
    _backend_flags(arun)
    _exec_flags(arun)
    arun.add_argument("--trace-schedule", action="store_true")
    arun.add_argument("--transcript", metavar="FILE", help="write the agent event log here")
    arun.set_defaults(func=cmd_agents_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"pel: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
