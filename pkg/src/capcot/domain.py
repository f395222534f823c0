"""Core value types and their canonical JSON form.

Every type here is a frozen dataclass. ``to_dict`` produces the canonical
JSON-ready mapping (snake_case keys, enums as their string values, sets as
sorted lists) and each type has a matching ``from_dict``.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Union


class Role(str, enum.Enum):
    SOLVER = "solver"
    CHALLENGER = "challenger"
    FEEDBACK = "feedback"


class AnswerKind(str, enum.Enum):
    NUMERIC = "numeric"
    EXPRESSION_SET = "expression-set"
    MULTIPLE_CHOICE = "multiple-choice"
    FREE_TEXT = "free-text"


ISSUE_TYPES = ("missing-assumption", "incorrect-inference", "unclear-step")
OTHER_ISSUE = "other"

COLD_START = "cold-start"
EVOLVED = "evolved"

# Canonical form of a gold/parsed answer, by kind.
Canonical = Union[float, frozenset, str]


@dataclass(frozen=True)
class GoldAnswer:
    kind: AnswerKind
    canonical: Canonical
    raw: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "canonical": canonical_to_json(self.canonical), "raw": self.raw}

    @classmethod
    def from_dict(cls, d: dict) -> "GoldAnswer":
        kind = AnswerKind(d["kind"])
        return cls(kind, canonical_from_json(d["canonical"], kind), d.get("raw", ""))


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    answer_kind: AnswerKind = AnswerKind.FREE_TEXT
    gold: GoldAnswer | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"query {self.id!r} has empty text")
        if self.gold is not None and self.gold.kind != self.answer_kind:
            raise ValueError(f"query {self.id!r}: gold kind {self.gold.kind.value} != {self.answer_kind.value}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "answer_kind": self.answer_kind.value,
            "gold": None if self.gold is None else self.gold.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Query":
        gold = d.get("gold")
        return cls(d["id"], d["text"], AnswerKind(d["answer_kind"]),
                   None if gold is None else GoldAnswer.from_dict(gold))


@dataclass(frozen=True)
class ErrorStrategy:
    """An adversarial strategy handed to the challenger.

    Cold-start strategies are built from one or two taxonomy families;
    evolved strategies come from the feedback agent and carry only free text.
    """

    name: str
    definition: str
    families: tuple[str, ...] = ()
    origin: str = COLD_START
    origin_round: int | None = None

    def __post_init__(self):
        if self.origin == COLD_START:
            if not 1 <= len(self.families) <= 2:
                raise ValueError("cold-start strategy needs one or two families")
        elif self.origin == EVOLVED:
            if not self.definition.strip():
                raise ValueError("evolved strategy needs a definition")
        else:
            raise ValueError(f"unknown strategy origin {self.origin!r}")

    @property
    def evolved(self) -> bool:
        return self.origin == EVOLVED

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "definition": self.definition,
            "families": list(self.families),
            "origin": self.origin,
            "origin_round": self.origin_round,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorStrategy":
        return cls(d["name"], d["definition"], tuple(d.get("families", ())),
                   d.get("origin", COLD_START), d.get("origin_round"))


@dataclass(frozen=True)
class RolePrompt:
    role: Role
    base_instructions: tuple[str, ...]
    dynamic_guidelines: tuple[str, ...] = ()
    version: int = 0
    strategy_slot: ErrorStrategy | None = None
    # round in which strategy_slot was installed
    strategy_round: int | None = None
    instruction: str = ""

    def __post_init__(self):
        if self.strategy_slot is not None and self.role is not Role.CHALLENGER:
            raise ValueError("only the challenger prompt carries a strategy")
        if self.version < 0:
            raise ValueError("version must be non-negative")

    def to_dict(self) -> dict:
        return {
            "role": self.role.value,
            "version": self.version,
            "base_instructions": list(self.base_instructions),
            "dynamic_guidelines": list(self.dynamic_guidelines),
            "strategy_slot": None if self.strategy_slot is None else self.strategy_slot.to_dict(),
            "strategy_round": self.strategy_round,
            "instruction": self.instruction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RolePrompt":
        slot = d.get("strategy_slot")
        return cls(
            role=Role(d["role"]),
            base_instructions=tuple(d["base_instructions"]),
            dynamic_guidelines=tuple(d.get("dynamic_guidelines", ())),
            version=d.get("version", 0),
            strategy_slot=None if slot is None else ErrorStrategy.from_dict(slot),
            strategy_round=d.get("strategy_round"),
            instruction=d.get("instruction", ""),
        )

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


@dataclass(frozen=True)
class Step:
    index: int
    text: str

    def to_dict(self) -> dict:
        return {"index": self.index, "text": self.text}


@dataclass(frozen=True)
class ReasoningChain:
    source: Role
    steps: tuple[Step, ...]
    final_answer: str
    raw_text: str
    # "partial" (no answer marker) or "malformed" (nothing parseable)
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if [s.index for s in self.steps] != list(range(1, len(self.steps) + 1)):
            raise ValueError("step indices must be 1..n")

    @property
    def malformed(self) -> bool:
        return "malformed" in self.flags

    def to_dict(self) -> dict:
        return {
            "source": self.source.value,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
            "raw_text": self.raw_text,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReasoningChain":
        return cls(Role(d["source"]), tuple(Step(s["index"], s["text"]) for s in d["steps"]),
                   d["final_answer"], d["raw_text"], tuple(d.get("flags", ())))


@dataclass(frozen=True)
class FeedbackItem:
    chain: Role
    step: int
    issue_type: str
    suggestion: str
    # free-text label, only used when issue_type is "other"
    issue_label: str = ""

    def __post_init__(self):
        if self.step < 1:
            raise ValueError("feedback step must be >= 1")
        if not self.suggestion.strip():
            raise ValueError("feedback suggestion must be non-empty")
        if self.issue_type not in ISSUE_TYPES and self.issue_type != OTHER_ISSUE:
            raise ValueError(f"unknown issue type {self.issue_type!r}")

    def to_dict(self) -> dict:
        return {"chain": self.chain.value, "step": self.step, "issue_type": self.issue_type,
                "issue_label": self.issue_label, "suggestion": self.suggestion}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackItem":
        return cls(Role(d["chain"]), d["step"], d["issue_type"], d["suggestion"], d.get("issue_label", ""))


@dataclass(frozen=True)
class FeedbackBundle:
    items: tuple[FeedbackItem, ...] = ()
    solver_directive: str | None = None
    next_strategy: ErrorStrategy | None = None
    flaw_analysis: str = ""
    solver_assessment: str = ""
    rationale: str = ""
    raw_text: str = field(default="", compare=False)

    @property
    def well_formed(self) -> bool:
        return self.solver_directive is not None and self.next_strategy is not None

    @property
    def defect(self) -> str | None:
        """``None`` for a well-formed bundle, else ``"partial"`` or ``"unparseable"``."""
        if self.well_formed:
            return None
        if self.solver_directive is None and self.next_strategy is None:
            return "unparseable"
        return "partial"

    def items_for(self, chain: Role) -> tuple[FeedbackItem, ...]:
        return tuple(i for i in self.items if i.chain is chain)

    def to_dict(self) -> dict:
        return {
            "items": [i.to_dict() for i in self.items],
            "solver_directive": self.solver_directive,
            "next_strategy": None if self.next_strategy is None else self.next_strategy.to_dict(),
            "flaw_analysis": self.flaw_analysis,
            "solver_assessment": self.solver_assessment,
            "rationale": self.rationale,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackBundle":
        strat = d.get("next_strategy")
        return cls(
            items=tuple(FeedbackItem.from_dict(i) for i in d.get("items", ())),
            solver_directive=d.get("solver_directive"),
            next_strategy=None if strat is None else ErrorStrategy.from_dict(strat),
            flaw_analysis=d.get("flaw_analysis", ""),
            solver_assessment=d.get("solver_assessment", ""),
            rationale=d.get("rationale", ""),
            raw_text=d.get("raw_text", ""),
        )


@dataclass(frozen=True)
class FeedbackLedger:
    """The feedback agent's record of one optimization round."""

    round: int
    entries: tuple[tuple[str, FeedbackBundle], ...] = ()
    notes: tuple[str, ...] = ()

    def defects(self) -> int:
        return sum(1 for _, b in self.entries if b.defect is not None)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "entries": [{"query_id": q, "bundle": b.to_dict()} for q, b in self.entries],
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackLedger":
        return cls(d["round"],
                   tuple((e["query_id"], FeedbackBundle.from_dict(e["bundle"])) for e in d.get("entries", ())),
                   tuple(d.get("notes", ())))


def canonical_to_json(value: Canonical) -> Any:
    if isinstance(value, frozenset):
        return sorted(value)
    return value


def canonical_from_json(value: Any, kind: AnswerKind) -> Canonical:
    if kind is AnswerKind.EXPRESSION_SET:
        return frozenset(float(v) for v in value)
    if kind is AnswerKind.NUMERIC:
        return float(value)
    return str(value)


def to_jsonable(obj: Any) -> Any:
    """Recursively convert domain values into JSON-ready structures."""
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, frozenset):
        return sorted(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    return obj


def canonical_json(obj: Any) -> str:
    """Stable serialization used for every file the package writes."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
