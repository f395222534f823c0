"""Role agents plus cold-start strategy sampling. Also reads and writes feedback text."""

from __future__ import annotations

import dataclasses
import logging
import random
import re
from collections.abc import Iterable

from .backend import DecodingConfig, Endpoint, RequestTag, complete, make_request
from .domain import (
    COLD_START,
    EVOLVED,
    OTHER_ISSUE,
    ErrorStrategy,
    FeedbackBundle,
    FeedbackItem,
    Query,
    ReasoningChain,
    Role,
    RolePrompt,
)
from .errors import EmptyTaxonomy, FeedbackUnparseable, MalformedChain
from .parsing import parse_chain
from .prompts import render_prompt

log = logging.getLogger(__name__)

FAMILIES = ("jump", "confusion", "fuzzy", "wrapper")
FAMILY_DEFINITIONS = {
    "jump": "omits key steps",
    "confusion": "mixes related concepts",
    "fuzzy": "hides gaps behind vague language",
    "wrapper": "embeds a wrong core step in a fluent explanation",
}


def cold_start_strategy(families: Iterable[str]) -> ErrorStrategy:
    chosen = [f for f in FAMILIES if f in set(families)]
    definition = " ".join(f"{f.capitalize()} error: {FAMILY_DEFINITIONS[f]}." for f in chosen)
    return ErrorStrategy("+".join(chosen), definition, tuple(chosen), COLD_START)


def sample_error_strategy(taxonomy: Iterable[str], rng: random.Random) -> ErrorStrategy:
    """Pick k in {1, 2} uniformly, then a uniform k-subset of ``taxonomy``."""
    fams = [f for f in FAMILIES if f in set(taxonomy)]
    unknown = set(taxonomy) - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown error families: {sorted(unknown)}")
    if not fams:
        raise EmptyTaxonomy("taxonomy is empty")
    k = 1 if len(fams) == 1 else rng.choice((1, 2))
    return cold_start_strategy(rng.sample(fams, k))


def _raw_only(source: Role, raw: str) -> ReasoningChain:
    return ReasoningChain(source, (), "", raw, ("malformed",))


def _call(prompt_text: str, role: Role, q: Query, cfg: DecodingConfig, endpoint: Endpoint,
          round: int, run_id: str, dataset: str = "") -> str:
    tag = RequestTag(role=role, round=round, query_id=q.id, run_id=run_id, dataset=dataset)
    return complete(endpoint, make_request(endpoint, prompt_text, cfg, tag)).content


def _chain(raw: str, source: Role, q: Query) -> ReasoningChain:
    try:
        return parse_chain(raw, source, q.answer_kind)
    except MalformedChain:
        return _raw_only(source, raw)


def solve(p_s: RolePrompt, q: Query, cfg: DecodingConfig, endpoint: Endpoint, *,
          round: int = 1, run_id: str = "", dataset: str = "") -> ReasoningChain:
    if p_s.role is not Role.SOLVER:
        raise ValueError("solve needs a solver prompt")
    raw = _call(render_prompt(p_s, q), Role.SOLVER, q, cfg, endpoint, round, run_id, dataset)
    return _chain(raw, Role.SOLVER, q)


def challenge(p_c: RolePrompt, q: Query, strategy: ErrorStrategy, cfg: DecodingConfig,
              endpoint: Endpoint, *, round: int = 1, run_id: str = "") -> ReasoningChain:
    if p_c.role is not Role.CHALLENGER:
        raise ValueError("challenge needs a challenger prompt")
    staged = dataclasses.replace(p_c, strategy_slot=strategy)
    raw = _call(render_prompt(staged, q), Role.CHALLENGER, q, cfg, endpoint, round, run_id)
    return _chain(raw, Role.CHALLENGER, q)


def critique(p_f: RolePrompt, q: Query, c_s: ReasoningChain, c_c: ReasoningChain,
             cfg: DecodingConfig, endpoint: Endpoint, *, round: int = 1, run_id: str = "") -> FeedbackBundle:
    """One joint comparison call; raises :class:`FeedbackUnparseable`."""
    if p_f.role is not Role.FEEDBACK:
        raise ValueError("critique needs a feedback prompt")
    extra = (("Challenger output (C_C)", c_c.raw_text), ("Solver output (C_S)", c_s.raw_text))
    raw = _call(render_prompt(p_f, q, extra), Role.FEEDBACK, q, cfg, endpoint, round, run_id)
    return parse_feedback(raw, round)


# -- feedback text format ---------------------------------------------------

_HEADER = re.compile(r"^[\s*#]*\[\s*step\s*([12])\s*(output)?\s*:[^\]]*\][\s*]*$", re.IGNORECASE)
_ITEM = re.compile(r"\{([^{}]*)\}")
_ITEM_FIELDS = re.compile(
    r"^\s*chain\s*:\s*(?P<chain>.*?);\s*step\s*:\s*(?P<step>.*?);\s*"
    r"issue\s*type\s*:\s*(?P<issue>.*?);\s*suggestion\s*:\s*(?P<suggestion>.*?)\s*$",
    re.IGNORECASE | re.DOTALL,
)
_DIRECTIVE_LEAD = re.compile(r"^imperative principle[^:]*:\s*$", re.IGNORECASE)

_ISSUE_LABELS = {
    "missing-assumption": "missing assumption",
    "incorrect-inference": "incorrect inference",
    "unclear-step": "unclear step",
}
_ISSUE_ALIASES = {
    "missing assumption": "missing-assumption",
    "missing assumptions": "missing-assumption",
    "incorrect inference": "incorrect-inference",
    "incorrect inferences": "incorrect-inference",
    "unclear step": "unclear-step",
    "unclear transition": "unclear-step",
}


def issue_type_of(label: str) -> tuple[str, str]:
    key = " ".join(re.sub(r"[-_]", " ", label.lower()).split()).rstrip(".")
    if key in _ISSUE_ALIASES:
        return _ISSUE_ALIASES[key], ""
    return OTHER_ISSUE, label.strip()


def _chain_role(text: str) -> Role | None:
    t = text.replace("$", "").strip().lower()
    if t.startswith("c_s") or t.startswith("cs") or "solver" in t:
        return Role.SOLVER
    if t.startswith("c_c") or t.startswith("cc") or "challenger" in t:
        return Role.CHALLENGER
    return None


def _unwrap(value: str) -> str:
    v = value.strip()
    if len(v) >= 2 and v[0] == "[" and v[-1] == "]":
        v = v[1:-1].strip()
    if len(v) >= 2 and v[0] in "\"“" and v[-1] in "\"”":
        v = v[1:-1].strip()
    return v


def _parse_items(text: str) -> list[FeedbackItem]:
    items = []
    for m in _ITEM.finditer(text):
        fields = _ITEM_FIELDS.match(m.group(1))
        if not fields:
            continue
        role = _chain_role(fields["chain"])
        step = re.search(r"\d+", fields["step"])
        if role is None or step is None:
            log.warning("dropping feedback item with unusable chain/step: %r", m.group(0))
            continue
        issue, label = issue_type_of(fields["issue"])
        suggestion = fields["suggestion"].strip()
        if not suggestion or int(step.group()) < 1:
            log.warning("dropping feedback item: %r", m.group(0))
            continue
        items.append(FeedbackItem(role, int(step.group()), issue, suggestion, label))
    return items


def _sections(raw: str) -> dict[tuple[str, bool], list[str]]:
    sections: dict[tuple[str, bool], list[str]] = {}
    current = None
    for line in raw.splitlines():
        m = _HEADER.match(line)
        if m:
            current = (m.group(1), m.group(2) is not None)
            sections.setdefault(current, [])
        elif current is not None:
            sections[current].append(line)
    return sections


def _field(lines: Iterable[str], name: str) -> str:
    pattern = re.compile(rf"^\s*{name}\s*:\s*(.*)$", re.IGNORECASE)
    for line in lines:
        m = pattern.match(line)
        if m:
            return _unwrap(m.group(1))
    return ""


def _parse_strategy(lines: list[str], round: int) -> ErrorStrategy | None:
    name, definition = "", []
    in_def = False
    for line in lines:
        m_name = re.match(r"^\s*strategy\s+name\s*:\s*(.*)$", line, re.IGNORECASE)
        m_def = re.match(r"^\s*strategy\s+definition\s*:\s*(.*)$", line, re.IGNORECASE)
        if m_name:
            name, in_def = _unwrap(m_name.group(1)), False
        elif m_def:
            definition, in_def = [m_def.group(1)], True
        elif in_def and line.strip():
            definition.append(line)
    text = _unwrap(" ".join(" ".join(definition).split()))
    name = name[:-1] if name.endswith(".") else name
    if not text:
        text = name
    if not text:
        return None
    return ErrorStrategy(name or f"evolved-round-{round}", text, (), EVOLVED, round)


def parse_feedback(raw: str, round: int = 1) -> FeedbackBundle:
    """Parse feedback-agent output laid out in the two-step bracketed format.

    Step items use the inline ``{Chain: ..; Step: ..; Issue type: ..;
    Suggestion: ..}`` form and may appear anywhere in the text.
    """
    if not raw or not raw.strip():
        raise FeedbackUnparseable("empty feedback")
    sections = _sections(raw)
    lines = raw.splitlines()

    directive = None
    if ("1", True) in sections:
        body = [ln for ln in sections[("1", True)] if ln.strip() and not _DIRECTIVE_LEAD.match(ln.strip())]
        text = _unwrap(" ".join(" ".join(body).split()))
        directive = text or None

    strategy_lines = sections.get(("2", True), lines)
    strategy = _parse_strategy(strategy_lines, round)

    if directive is None and strategy is None:
        exc = FeedbackUnparseable("no solver directive and no next strategy")
        exc.raw_text = raw
        raise exc
    return FeedbackBundle(
        items=tuple(_parse_items(raw)),
        solver_directive=directive,
        next_strategy=strategy,
        flaw_analysis=_field(lines, "adversarial logic flaw"),
        solver_assessment=_field(lines, "solver logic assessment"),
        rationale=_field(lines, "evolutionary direction"),
        raw_text=raw,
    )


def _item_line(item: FeedbackItem) -> str:
    chain = "C_S" if item.chain is Role.SOLVER else "C_C"
    label = item.issue_label if item.issue_type == OTHER_ISSUE else _ISSUE_LABELS[item.issue_type]
    return f"{{Chain: {chain}; Step: {item.step}; Issue type: {label}; Suggestion: {item.suggestion}}}"


def format_feedback(bundle: FeedbackBundle) -> str:
    """Lay a bundle out in the two-step bracketed format read by :func:`parse_feedback`."""
    out = ["[Step 1: Comparative Logic Analysis]"]
    if bundle.flaw_analysis:
        out.append(f"Adversarial Logic Flaw: {bundle.flaw_analysis}")
    if bundle.solver_assessment:
        out.append(f"Solver Logic Assessment: {bundle.solver_assessment}")
    out.extend(_item_line(i) for i in bundle.items)
    if bundle.solver_directive is not None:
        out.append("[Step 1 Output: Logical Enhancement Directive for G_S]")
        out.append("Imperative principle to elevate reasoning rigor:")
        out.append(bundle.solver_directive)
    out.append("[Step 2: Strategic Rationale]")
    if bundle.rationale:
        out.append(f"Evolutionary Direction: {bundle.rationale}")
    if bundle.next_strategy is not None:
        out.append("[Step 2 Output: Next-Step Adversarial Strategy for G_C]")
        out.append(f"Strategy Name: {bundle.next_strategy.name}")
        out.append(f"Strategy Definition: {bundle.next_strategy.definition}")
    return "\n".join(out) + "\n"

