"""``capcot`` command line."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .agents import FAMILIES, format_feedback
from .backend import (
    DEFAULT_MODEL,
    ENV_API_KEY,
    ENV_BASE_URL,
    ENV_MODEL,
    DecodingConfig,
    Endpoint,
    OpenAIBackend,
    ScriptedBackend,
)
from .cycle import CycleConfig, LineageStore, PromptLineage, load_final_prompt, run_optimization
from .domain import Role
from .errors import BackendError, CapCotError, ConfigError, MissingLineage, ResumeMismatch
from .evaluation import ABLATION_RUNS, DEFAULT_RUNS, FORMATS, cot_baseline, evaluate, load_dataset, temperature_sweep
from .prompts import render_prompt

EXIT_OK = 0
EXIT_BACKEND = 2
EXIT_CONFIG = 3

log = logging.getLogger("capcot")


def _load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    try:
        with p.open("rb") as fh:
            return tomllib.load(fh), p.parent
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {p}: {exc}") from exc


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def _decoding(conf: dict) -> dict[Role, DecodingConfig]:
    section = conf.get("decoding", {})
    shared = {k: v for k, v in section.items() if not isinstance(v, dict)}
    out = {}
    for role in Role:
        try:
            out[role] = DecodingConfig.from_dict({**shared, **section.get(role.value, {})})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad decoding settings for {role.value}: {exc}") from exc
    return out


def _endpoint(args, conf: dict, base: Path) -> Endpoint:
    section = conf.get("backend", {})
    kind = args.backend or section.get("kind", "openai")
    model = args.model or section.get("model") or os.environ.get(ENV_MODEL, DEFAULT_MODEL)
    retry = {"max_attempts": section.get("max_attempts", 3), "backoff": section.get("backoff", 1.0)}
    if kind == "scripted":
        script = args.script or _resolve(base, section.get("script"))
        if script is None:
            raise ConfigError("scripted backend needs --script")
        try:
            backend = ScriptedBackend.from_file(script)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load script {script}: {exc}") from exc
    elif kind == "openai":
        url = section.get("base_url") or os.environ.get(ENV_BASE_URL, "https://api.openai.com")
        backend = OpenAIBackend(url, os.environ.get(ENV_API_KEY))
    else:
        raise ConfigError(f"unknown backend kind {kind!r}")
    return Endpoint(backend, model, **retry)


def _dataset(args, conf: dict, base: Path):
    section = conf.get("data", {})
    path = args.dataset or _resolve(base, section.get("path"))
    if path is None:
        raise ConfigError("no dataset given (--dataset or [data].path)")
    fmt = args.dataset_format or section.get("format", "jsonl-qa")
    try:
        ds = load_dataset(path, fmt)
    except (CapCotError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    for rej in ds.rejects:
        print(f"rejected {path}:{rej.line}: {rej.reason}", file=sys.stderr)
    return ds.limit(args.limit if args.limit is not None else section.get("limit"))


# -- optimize ---------------------------------------------------------------


def _summary(record) -> str:
    a = record.after
    strategy = a.challenger.strategy_slot
    usage = record.usage
    prompt = sum(u.prompt_tokens for u in usage)
    completion = sum(u.completion_tokens for u in usage)
    line = (f"round {record.round}: solver v{a.solver.version} ({len(a.solver.dynamic_guidelines)} guidelines), "
            f"challenger v{a.challenger.version} strategy={strategy.name if strategy else '-'}, "
            f"feedback v{a.feedback.version} ({len(a.feedback.dynamic_guidelines)} guidelines); "
            f"tokens prompt={prompt} completion={completion}")
    if record.flags:
        line += f"; flags: {', '.join(record.flags)}"
    return line


def cmd_optimize(args) -> int:
    conf, base = _load_config(args.config)
    run = conf.get("run", {})
    out = args.out or _resolve(base, run.get("out"))
    if out is None:
        raise ConfigError("no output directory (--out or [run].out)")
    ds = _dataset(args, conf, base)
    taxonomy = tuple(args.taxonomy.split(",")) if args.taxonomy else tuple(run.get("taxonomy", FAMILIES))
    if set(taxonomy) - set(FAMILIES) or not taxonomy:
        raise ConfigError(f"taxonomy must be a non-empty subset of {FAMILIES}")
    train = conf.get("data", {}).get("train_queries") or [q.id for q in ds.items]
    try:
        cfg = CycleConfig(
            rounds=args.rounds if args.rounds is not None else run.get("rounds", 3),
            train_queries=tuple(train),
            taxonomy=taxonomy,
            sfpr_cap=run.get("sfpr_cap", 10),
            decoding=_decoding(conf),
            seed=args.seed if args.seed is not None else run.get("seed", 0),
            use_challenger=run.get("use_challenger", True),
            batch_aggregate=run.get("batch_aggregate", False),
            challenger_guidelines=run.get("challenger_guidelines", False),
            run_id=run.get("run_id", ""),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    endpoint = _endpoint(args, conf, base)
    lineage = run_optimization(cfg, ds.items, endpoint, out, on_round=lambda r: print(_summary(r)))
    print(f"lineage {lineage.run_id} written to {out}; final solver prompt v{lineage.final_solver.version}")
    return EXIT_OK


# -- eval -------------------------------------------------------------------


def cmd_eval(args) -> int:
    if args.prompt and args.round is not None:
        raise ConfigError("--round selects a lineage round; it cannot be combined with --prompt")
    if args.sweep and args.baseline:
        raise ConfigError("--sweep and --baseline are mutually exclusive")
    conf, base = _load_config(args.config)
    if args.lineage:
        lineage = LineageStore(args.lineage).load()
        r = len(lineage.records) if args.round is None else args.round
        try:
            p_s = lineage.prompts_at(r).solver
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        p_s, r = load_final_prompt(args.prompt), 0
    infer_round = args.infer_round if args.infer_round is not None else r + 1
    runs = args.runs if args.runs is not None else (ABLATION_RUNS if args.ablation else DEFAULT_RUNS)
    ds = _dataset(args, conf, base)
    endpoint = _endpoint(args, conf, base)
    decoding = _decoding(conf)[Role.SOLVER]
    if args.sweep:
        report = temperature_sweep(p_s, ds, runs_per_temp=args.runs or 1, cfg=decoding, endpoint=endpoint,
                                   round=infer_round, workers=args.workers)
    elif args.baseline:
        report = cot_baseline(ds, decoding, endpoint, optimized=p_s, runs=runs,
                              optimized_round=infer_round, workers=args.workers)
    else:
        report = evaluate(p_s, ds, runs, decoding, endpoint, round=infer_round, workers=args.workers)
    print(report.to_json() if args.format == "json" else report.to_table(), end="" if args.format == "json" else "\n")
    return EXIT_OK


# -- show -------------------------------------------------------------------


def _diff(lineage: PromptLineage, r1: int, r2: int) -> str:
    a, b = lineage.prompts_at(r1), lineage.prompts_at(r2)
    out = []
    for role in Role:
        pa, pb = a.get(role), b.get(role)
        added = [g for g in pb.dynamic_guidelines if g not in pa.dynamic_guidelines]
        removed = [g for g in pa.dynamic_guidelines if g not in pb.dynamic_guidelines]
        out.append(f"{role.value}: v{pa.version} -> v{pb.version}")
        out += [f"  + {g}" for g in added]
        out += [f"  - {g}" for g in removed]
        if pa.strategy_slot != pb.strategy_slot:
            old = pa.strategy_slot.name if pa.strategy_slot else "-"
            new = pb.strategy_slot.definition if pb.strategy_slot else "-"
            out.append(f"  strategy {old} -> {pb.strategy_slot.name if pb.strategy_slot else '-'}: {new}")
    return "\n".join(out)


def cmd_show(args) -> int:
    lineage = LineageStore(args.lineage).load()
    try:
        if args.diff:
            print(_diff(lineage, *args.diff))
        elif args.prompt:
            r = len(lineage.records) if args.round is None else args.round
            print(render_prompt(lineage.prompts_at(r).get(Role(args.prompt)), None), end="")
        elif args.feedback or args.chain:
            record = lineage.record(args.round if args.round is not None else 1)
            if args.feedback:
                bundle = record.interaction(args.feedback).feedback
                print(format_feedback(bundle) if bundle.defect != "unparseable" else bundle.raw_text, end="")
            else:
                it = record.interaction(args.chain)
                chain = it.solver_chain if args.source == "solver" else it.challenger_chain
                if chain is None:
                    raise KeyError(f"no {args.source} chain recorded for {args.chain}")
                print(chain.raw_text)
        else:
            print(f"run {lineage.run_id}: {len(lineage.records)} rounds, custody "
                  f"{'ok' if lineage.custody_holds() else 'BROKEN'}")
            for record in lineage.records:
                print(_summary(record))
    except KeyError as exc:
        raise ConfigError(f"selector miss: {exc.args[0]}") from exc
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--backend", choices=("openai", "scripted"))
    p.add_argument("--script", help="JSON script for the scripted backend")
    p.add_argument("--model")
    p.add_argument("--dataset")
    p.add_argument("--dataset-format", choices=FORMATS)
    p.add_argument("--limit", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capcot", description="Refine a reasoning prompt against an adversarial challenger.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run optimization rounds and write a lineage")
    _common(p)
    p.add_argument("--rounds", type=int)
    p.add_argument("--taxonomy", help="comma-separated cold-start families")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="lineage directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("eval", help="evaluate a solver prompt")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--lineage")
    src.add_argument("--prompt", help="solver prompt JSON file")
    p.add_argument("--round", type=int, help="lineage round whose solver prompt to use")
    p.add_argument("--infer-round", type=int, help="round tag sent with inference calls")
    p.add_argument("--runs", type=int)
    p.add_argument("--ablation", action="store_true", help="default to five runs")
    p.add_argument("--sweep", action="store_true", help="temperature sweep 0.0..1.0")
    p.add_argument("--baseline", action="store_true", help="compare with the plain CoT prompt")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("show", help="print lineage artifacts")
    p.add_argument("lineage")
    p.add_argument("--prompt", choices=[r.value for r in Role])
    p.add_argument("--round", type=int)
    p.add_argument("--diff", type=int, nargs=2, metavar=("R1", "R2"))
    p.add_argument("--feedback", metavar="QUERY_ID")
    p.add_argument("--chain", metavar="QUERY_ID")
    p.add_argument("--source", choices=("solver", "challenger"), default="solver")
    p.set_defaults(func=cmd_show)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ConfigError, MissingLineage, ResumeMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
