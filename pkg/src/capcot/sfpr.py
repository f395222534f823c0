"""Rule-based structured feedback prompt refinement.

Directives are split into sentences. Sentences tied to one problem instance
are cut down or dropped, the survivors are phrased as commands, and anything
already present is skipped. The guideline list is capped, oldest out first.
"""

from __future__ import annotations

import dataclasses
import re
from collections.abc import Iterable, Sequence

from .domain import ErrorStrategy, FeedbackLedger, Role, RolePrompt
from .prompts import is_duplicate

DEFAULT_CAP = 10
FORMAT_GUIDELINE = "Always emit both bracketed output sections."

# Verbs (and imperative-capable openers) accepted as a guideline's first word.
IMPERATIVE_OPENERS = frozenset("""
    add always apply avoid break calculate check clarify compare compute confirm consider
    convert cross-check declare define derive discard distinguish do document double-check
    enforce ensure establish evaluate explain express filter flag give guard identify include
    introduce justify keep label list make mark never note prefer prevent prove provide
    record recheck re-check reject remember require restate re-derive reread review separate
    show simplify specify state substitute summarize test trace track treat use validate
    verify weigh weight write
""".split())

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+(?=[A-Z\"'(\[])")
_NUMBER = re.compile(r"(?<![A-Za-z0-9_])\d+(?:[.,]\d+)*")
_QUOTED = re.compile(r"\"[^\"]*\"|“[^”]*”|`[^`]*`|\$[^$]*\$")
# Example clauses that may be dropped wholesale when they carry instance detail.
_EXAMPLE_CLAUSE = re.compile(
    r"\s*\((?:[^()]*)\)"
    r"|,?\s*\b(?:e\.g\.|for example|for instance|such as|like)\b[^.;]*",
    re.IGNORECASE,
)


def split_sentences(text: str) -> list[str]:
    text = " ".join(text.split())
    return [s.strip() for s in _SENTENCE_END.split(text) if s.strip()]


def _instance_tokens(sentence: str, base_text: str) -> list[str]:
    # list enumerators such as "(3)" say nothing about which numbers are generic
    base_numbers = set(_NUMBER.findall(re.sub(r"\(\d+\)", " ", base_text)))
    tokens = [m.group(0) for m in _QUOTED.finditer(sentence)]
    tokens += [n for n in _NUMBER.findall(_QUOTED.sub(" ", sentence)) if n not in base_numbers]
    return tokens


def generalize(sentence: str, base_text: str) -> str | None:
    """Return a transferable form of ``sentence`` or ``None`` to drop it.

    A sentence with instance detail survives only if that detail sits in a
    parenthetical or example clause that can be cut without losing the rule.
    """
    if not _instance_tokens(sentence, base_text):
        return sentence
    stripped = _EXAMPLE_CLAUSE.sub(
        lambda m: "" if _instance_tokens(m.group(0), base_text) else m.group(0), sentence)
    stripped = re.sub(r"\s+([.,;:!?])", r"\1", " ".join(stripped.split()))
    if _instance_tokens(stripped, base_text) or len(re.findall(r"[A-Za-z]+", stripped)) < 3:
        return None
    return stripped


_MODAL_SUBJECT = re.compile(
    r"^(?:you|we|the solver|the model|solvers)\s+(?:should|must|need to|have to|ought to)\s+(?:always\s+)?",
    re.IGNORECASE)


def make_imperative(sentence: str) -> str:
    s = sentence.strip().strip("\"“”").strip()
    s = re.sub(r"^(?:directive|principle|guideline|rule)\s*:\s*", "", s, flags=re.IGNORECASE)
    s = _MODAL_SUBJECT.sub("", s)
    if not s:
        return s
    first = re.match(r"[A-Za-z][A-Za-z-]*", s)
    if first is None or first.group(0).lower() not in IMPERATIVE_OPENERS:
        lead = s[0].lower() + s[1:] if not s[:2].isupper() else s
        s = f"Ensure {lead}"
    else:
        s = s[0].upper() + s[1:]
    if s[-1] not in ".!?":
        s += "."
    return s


def candidate_guidelines(directives: Iterable[str], base_text: str) -> list[str]:
    """Directive sentences turned into new, mutually distinct guideline candidates."""
    out: list[str] = []
    for directive in directives:
        for sentence in split_sentences(directive):
            general = generalize(sentence, base_text)
            if general is None:
                continue
            g = make_imperative(general)
            if g and not any(is_duplicate(g, o) for o in out):
                out.append(g)
    return out


def _merge(existing: Sequence[str], candidates: Sequence[str], cap: int) -> tuple[str, ...]:
    # Only the newest `cap` candidates can survive this call anyway; cutting
    # first keeps repeated application of the same directives a no-op.
    candidates = list(candidates)[-cap:]
    protected: set[int] = set()
    fresh: list[str] = []
    for c in candidates:
        hits = [i for i, g in enumerate(existing) if is_duplicate(c, g)]
        if hits:
            # one protected slot per candidate keeps protected + fresh <= cap
            protected.add(hits[-1])
        else:
            fresh.append(c)
    kept = list(enumerate(existing))
    overflow = len(kept) + len(fresh) - cap
    if overflow > 0:
        evict = [i for i, _ in kept if i not in protected][:overflow]
        kept = [(i, g) for i, g in kept if i not in set(evict)]
    return tuple(g for _, g in kept) + tuple(fresh)


def sfpr_refine(p: RolePrompt, directives: Sequence[str], cap: int = DEFAULT_CAP, round: int = 0) -> RolePrompt:
    """Append refined guidelines from ``directives`` to ``p``.

    Returns ``p`` itself when nothing changes; otherwise a copy with the new
    guideline list and ``version + 1``.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    base_text = "\n".join(p.base_instructions)
    merged = _merge(p.dynamic_guidelines, candidate_guidelines(directives, base_text), cap)
    if merged == p.dynamic_guidelines:
        return p
    return dataclasses.replace(p, dynamic_guidelines=merged, version=p.version + 1)


def sfpr_refine_challenger(p_c: RolePrompt, strategy: ErrorStrategy, directives: Sequence[str] = (),
                           cap: int = DEFAULT_CAP, round: int = 0) -> RolePrompt:
    """Install ``strategy`` (replacing any previous one) and refine guidelines.

    Installing a strategy always counts as one update, stamped with ``round``.
    """
    if p_c.role is not Role.CHALLENGER:
        raise ValueError("sfpr_refine_challenger needs a challenger prompt")
    refined = sfpr_refine(p_c, directives, cap, round)
    return dataclasses.replace(refined, strategy_slot=strategy, strategy_round=round,
                               version=p_c.version + 1)


def sfpr_refine_self(p_d: RolePrompt, ledger: FeedbackLedger, cap: int = DEFAULT_CAP, round: int = 0) -> RolePrompt:
    """Add the format-discipline guideline when the round had defective bundles."""
    if p_d.role is not Role.FEEDBACK:
        raise ValueError("sfpr_refine_self needs a feedback prompt")
    if ledger.defects() == 0:
        return p_d
    return sfpr_refine(p_d, [FORMAT_GUIDELINE], cap, round)
