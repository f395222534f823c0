"""Optimization rounds and the prompt lineage they leave on disk."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .agents import FAMILIES, challenge, critique, sample_error_strategy, solve
from .backend import DecodingConfig, Endpoint, UsageRecord
from .domain import (
    ErrorStrategy,
    FeedbackBundle,
    FeedbackLedger,
    Query,
    ReasoningChain,
    Role,
    RolePrompt,
    canonical_json,
)
from .errors import ConfigError, FeedbackUnparseable, MissingLineage, ResumeMismatch
from .prompts import initial_prompts
from .sfpr import DEFAULT_CAP, sfpr_refine, sfpr_refine_challenger, sfpr_refine_self

log = logging.getLogger(__name__)

NO_CHALLENGER_TEXT = "(no challenger output)"


@dataclass(frozen=True)
class CycleConfig:
    rounds: int = 3
    train_queries: tuple[str, ...] = ()
    taxonomy: tuple[str, ...] = FAMILIES
    sfpr_cap: int = DEFAULT_CAP
    decoding: Mapping[Role, DecodingConfig] = field(
        default_factory=lambda: {role: DecodingConfig() for role in Role})
    seed: int = 0
    # ablation switch: False runs solver + feedback only
    use_challenger: bool = True
    # apply solver directives once per batch instead of once per query
    batch_aggregate: bool = False
    # also append challenger-chain suggestions to the challenger guidelines
    challenger_guidelines: bool = False
    run_id: str = ""

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not self.train_queries:
            raise ValueError("train_queries must be non-empty")
        if self.sfpr_cap < 1:
            raise ValueError("sfpr_cap must be >= 1")

    def decoding_for(self, role: Role) -> DecodingConfig:
        return self.decoding.get(role, DecodingConfig())

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "train_queries": list(self.train_queries),
            "taxonomy": list(self.taxonomy),
            "sfpr_cap": self.sfpr_cap,
            "decoding": {role.value: self.decoding_for(role).to_dict() for role in Role},
            "seed": self.seed,
            "use_challenger": self.use_challenger,
            "batch_aggregate": self.batch_aggregate,
            "challenger_guidelines": self.challenger_guidelines,
            "run_id": self.run_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CycleConfig":
        decoding = {Role(k): DecodingConfig.from_dict(v) for k, v in d.get("decoding", {}).items()}
        return cls(
            rounds=d.get("rounds", 3),
            train_queries=tuple(d["train_queries"]),
            taxonomy=tuple(d.get("taxonomy", FAMILIES)),
            sfpr_cap=d.get("sfpr_cap", DEFAULT_CAP),
            decoding={role: decoding.get(role, DecodingConfig()) for role in Role},
            seed=d.get("seed", 0),
            use_challenger=d.get("use_challenger", True),
            batch_aggregate=d.get("batch_aggregate", False),
            challenger_guidelines=d.get("challenger_guidelines", False),
            run_id=d.get("run_id", ""),
        )


@dataclass(frozen=True)
class Prompts:
    solver: RolePrompt
    challenger: RolePrompt
    feedback: RolePrompt

    @classmethod
    def initial(cls) -> "Prompts":
        p = initial_prompts()
        return cls(p[Role.SOLVER], p[Role.CHALLENGER], p[Role.FEEDBACK])

    def get(self, role: Role) -> RolePrompt:
        return getattr(self, role.value)

    def to_dict(self) -> dict:
        return {role.value: self.get(role).to_dict() for role in Role}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Prompts":
        return cls(*(RolePrompt.from_dict(d[role.value]) for role in Role))


@dataclass(frozen=True)
class Interaction:
    query: Query
    strategy: ErrorStrategy
    solver_chain: ReasoningChain
    challenger_chain: ReasoningChain | None
    feedback: FeedbackBundle
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "query": self.query.to_dict(),
            "strategy": self.strategy.to_dict(),
            "solver_chain": self.solver_chain.to_dict(),
            "challenger_chain": None if self.challenger_chain is None else self.challenger_chain.to_dict(),
            "feedback": self.feedback.to_dict(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Interaction":
        cc = d.get("challenger_chain")
        return cls(
            Query.from_dict(d["query"]),
            ErrorStrategy.from_dict(d["strategy"]),
            ReasoningChain.from_dict(d["solver_chain"]),
            None if cc is None else ReasoningChain.from_dict(cc),
            FeedbackBundle.from_dict(d["feedback"]),
            tuple(d.get("flags", ())),
        )


@dataclass(frozen=True)
class RoundRecord:
    round: int
    before: Prompts
    after: Prompts
    interactions: tuple[Interaction, ...]
    ledger: FeedbackLedger
    usage: tuple[UsageRecord, ...] = ()
    flags: tuple[str, ...] = ()

    def interaction(self, query_id: str) -> Interaction:
        for it in self.interactions:
            if it.query.id == query_id:
                return it
        raise KeyError(query_id)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
            "interactions": [i.to_dict() for i in self.interactions],
            "ledger_notes": list(self.ledger.notes),
            "usage": [u.to_dict() for u in self.usage],
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoundRecord":
        interactions = tuple(Interaction.from_dict(i) for i in d["interactions"])
        ledger = FeedbackLedger(d["round"], tuple((i.query.id, i.feedback) for i in interactions),
                                tuple(d.get("ledger_notes", ())))
        return cls(d["round"], Prompts.from_dict(d["before"]), Prompts.from_dict(d["after"]),
                   interactions, ledger, tuple(UsageRecord.from_dict(u) for u in d.get("usage", ())),
                   tuple(d.get("flags", ())))


def _rng(seed: int, round: int, query_id: str, stream: str = "strategy") -> random.Random:
    # string seeds are hashed with SHA-512, so this is stable across processes
    return random.Random(f"{seed}:{round}:{query_id}:{stream}")


def run_round(prompts: Prompts, batch: Sequence[Query], cfg: CycleConfig, endpoint: Endpoint,
              round: int, run_id: str = "") -> tuple[Prompts, RoundRecord]:
    """Run solve -> challenge -> critique -> refine for every query in ``batch``."""
    p_s, p_c, p_d = prompts.solver, prompts.challenger, prompts.feedback
    mark = len(endpoint.ledger)
    interactions: list[Interaction] = []
    pending_directives: list[str] = []
    round_flags: list[str] = []

    for q in batch:
        flags: list[str] = []
        slot = p_c.strategy_slot
        if slot is not None and slot.evolved:
            strategy = slot
        else:
            strategy = sample_error_strategy(cfg.taxonomy, _rng(cfg.seed, round, q.id))

        c_s = solve(p_s, q, cfg.decoding_for(Role.SOLVER), endpoint, round=round, run_id=run_id)
        if cfg.use_challenger:
            c_c = challenge(p_c, q, strategy, cfg.decoding_for(Role.CHALLENGER), endpoint,
                            round=round, run_id=run_id)
        else:
            c_c = None
        shown = c_c or ReasoningChain(Role.CHALLENGER, (), "", NO_CHALLENGER_TEXT, ("malformed",))
        for chain in (c_s, c_c):
            if chain is not None and chain.malformed:
                flags.append(f"malformed-{chain.source.value}-chain")

        try:
            bundle = critique(p_d, q, c_s, shown, cfg.decoding_for(Role.FEEDBACK), endpoint,
                              round=round, run_id=run_id)
        except FeedbackUnparseable as exc:
            bundle = FeedbackBundle(raw_text=getattr(exc, "raw_text", ""))
        if bundle.defect is not None:
            flags.append(f"feedback-{bundle.defect}")

        if bundle.solver_directive is not None:
            if cfg.batch_aggregate:
                pending_directives.append(bundle.solver_directive)
            else:
                p_s = sfpr_refine(p_s, [bundle.solver_directive], cfg.sfpr_cap, round)

        if cfg.use_challenger:
            # no new strategy named: the one just used (possibly evolved) stays in the slot
            next_strategy = bundle.next_strategy or strategy
            directives = []
            if cfg.challenger_guidelines:
                directives = [i.suggestion for i in bundle.items_for(Role.CHALLENGER)]
            p_c = sfpr_refine_challenger(p_c, next_strategy, directives, cfg.sfpr_cap, round)

        interactions.append(Interaction(q, strategy, c_s, c_c, bundle, tuple(flags)))
        round_flags.extend(f"{q.id}:{f}" for f in flags)

    if pending_directives:
        p_s = sfpr_refine(p_s, pending_directives, cfg.sfpr_cap, round)

    entries = tuple((it.query.id, it.feedback) for it in interactions)
    ledger = FeedbackLedger(round, entries)
    defects = ledger.defects()
    if defects:
        ledger = dataclasses.replace(ledger, notes=(f"{defects} of {len(entries)} bundles defective",))
    p_d = sfpr_refine_self(p_d, ledger, cfg.sfpr_cap, round)

    after = Prompts(p_s, p_c, p_d)
    usage = tuple(u for u in endpoint.ledger.since(mark) if u.run_id == run_id and u.round == round)
    record = RoundRecord(round, prompts, after, tuple(interactions), ledger, usage, tuple(round_flags))
    return after, record


@dataclass(frozen=True)
class PromptLineage:
    run_id: str
    config: CycleConfig
    records: tuple[RoundRecord, ...] = ()
    initial: Prompts = field(default_factory=Prompts.initial)

    @property
    def final_solver(self) -> RolePrompt:
        return self.prompts_at(len(self.records)).solver

    def prompts_at(self, round: int) -> Prompts:
        """Prompts after ``round`` rounds; 0 gives the initial prompts."""
        if round == 0:
            return self.records[0].before if self.records else self.initial
        if not 1 <= round <= len(self.records):
            raise KeyError(f"lineage has no round {round}")
        return self.records[round - 1].after

    def record(self, round: int) -> RoundRecord:
        if not 1 <= round <= len(self.records):
            raise KeyError(f"lineage has no round {round}")
        return self.records[round - 1]

    def custody_holds(self) -> bool:
        rounds_ok = [r.round for r in self.records] == list(range(1, len(self.records) + 1))
        links_ok = all(a.after == b.before for a, b in zip(self.records, self.records[1:]))
        return rounds_ok and links_ok

    def usage(self) -> tuple[UsageRecord, ...]:
        return tuple(u for r in self.records for u in r.usage)


# -- persistence ------------------------------------------------------------

MANIFEST = "manifest.json"
ROUNDS_DIR = "rounds"
FINAL_PROMPT = "final_prompt.json"


def config_hash(cfg: CycleConfig, batch: Sequence[Query]) -> str:
    payload = canonical_json({"config": cfg.to_dict(), "queries": [q.to_dict() for q in batch]})
    return hashlib.sha256(payload.encode()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def round_path(directory: Path, round: int) -> Path:
    return directory / ROUNDS_DIR / f"round-{round:03d}.json"


class LineageStore:
    """Directory layout: manifest, one JSON file per round, final solver prompt."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)

    def exists(self) -> bool:
        return (self.dir / MANIFEST).is_file()

    def write_manifest(self, run_id: str, cfg: CycleConfig, batch: Sequence[Query], initial: Prompts) -> None:
        (self.dir / ROUNDS_DIR).mkdir(parents=True, exist_ok=True)
        manifest = {
            "run_id": run_id,
            "config": cfg.to_dict(),
            "config_hash": config_hash(cfg, batch),
            "queries": [q.to_dict() for q in batch],
            "initial_prompts": initial.to_dict(),
        }
        _write_atomic(self.dir / MANIFEST, canonical_json(manifest))

    def manifest(self) -> dict:
        if not self.exists():
            raise MissingLineage(f"no lineage manifest in {self.dir}")
        return json.loads((self.dir / MANIFEST).read_text(encoding="utf-8"))

    def append(self, record: RoundRecord) -> None:
        _write_atomic(round_path(self.dir, record.round), canonical_json(record.to_dict()))
        _write_atomic(self.dir / FINAL_PROMPT, canonical_json(record.after.solver.to_dict()))

    def load_records(self) -> list[RoundRecord]:
        records = []
        r = 1
        while round_path(self.dir, r).is_file():
            records.append(RoundRecord.from_dict(json.loads(round_path(self.dir, r).read_text(encoding="utf-8"))))
            r += 1
        return records

    def load(self) -> PromptLineage:
        m = self.manifest()
        return PromptLineage(m["run_id"], CycleConfig.from_dict(m["config"]), tuple(self.load_records()),
                             Prompts.from_dict(m["initial_prompts"]))

    def queries(self) -> list[Query]:
        return [Query.from_dict(q) for q in self.manifest()["queries"]]


def load_final_prompt(path: str | Path) -> RolePrompt:
    path = Path(path)
    if path.is_dir():
        path = path / FINAL_PROMPT
    if not path.is_file():
        raise MissingLineage(f"no prompt file at {path}")
    return RolePrompt.from_dict(json.loads(path.read_text(encoding="utf-8")))


def select_batch(cfg: CycleConfig, queries: Sequence[Query]) -> list[Query]:
    by_id = {q.id: q for q in queries}
    missing = [qid for qid in cfg.train_queries if qid not in by_id]
    if missing:
        raise ConfigError(f"unknown training query ids: {missing}")
    return [by_id[qid] for qid in cfg.train_queries]


def run_optimization(cfg: CycleConfig, queries: Sequence[Query], endpoint: Endpoint,
                     lineage_dir: str | Path | None = None, *, on_round=None) -> PromptLineage:
    """Run ``cfg.rounds`` rounds, persisting each finished round.

    If ``lineage_dir`` already holds a lineage for the same configuration the
    run resumes after its last complete round.
    """
    batch = select_batch(cfg, queries)
    digest = config_hash(cfg, batch)
    run_id = cfg.run_id or f"run-{digest[:12]}"
    initial = Prompts.initial()
    records: list[RoundRecord] = []
    store = LineageStore(lineage_dir) if lineage_dir is not None else None

    if store is not None and store.exists():
        manifest = store.manifest()
        if manifest["config_hash"] != digest:
            raise ResumeMismatch(f"{store.dir} was created with a different configuration")
        initial = Prompts.from_dict(manifest["initial_prompts"])
        records = store.load_records()[: cfg.rounds]
        if records:
            log.info("resuming %s after round %d", run_id, records[-1].round)
    elif store is not None:
        store.write_manifest(run_id, cfg, batch, initial)

    prompts = records[-1].after if records else initial
    for r in range(len(records) + 1, cfg.rounds + 1):
        prompts, record = run_round(prompts, batch, cfg, endpoint, r, run_id)
        records.append(record)
        if store is not None:
            store.append(record)
        if on_round is not None:
            on_round(record)
    return PromptLineage(run_id, cfg, tuple(records), initial)


def infer(p_s: RolePrompt, q: Query, cfg: DecodingConfig, endpoint: Endpoint, *,
          round: int = 1, run_id: str = "", dataset: str = "") -> ReasoningChain:
    """Solver-only inference with a (refined) solver prompt."""
    return solve(p_s, q, cfg, endpoint, round=round, run_id=run_id, dataset=dataset)
