"""Text <-> structure for reasoning chains and answers."""

from __future__ import annotations

import math
import re
from fractions import Fraction

from .domain import AnswerKind, Canonical, ReasoningChain, Role, Step
from .errors import MalformedChain, NoAnswerFound, UnparseableAnswer

DEFAULT_TOLERANCE = 1e-4

# Step-marker schemes, in precedence order. The first scheme matching at
# least one line is used for the whole chain.
STEP_SCHEMES = (
    ("paren", re.compile(r"^\s*\((\d+)\)\s*(.*)$")),
    ("dot", re.compile(r"^\s*(\d+)\.(?!\d)\s*(.*)$")),
    ("step", re.compile(r"^\s*step\s*(\d+)\s*:\s*(.*)$", re.IGNORECASE)),
)

_ANSWER_MARKER = re.compile(r"(?:final\s+answer|answer)\s*:", re.IGNORECASE)
_NUMBER = re.compile(r"[-+]?\$?\d[\d,]*(?:\.\d+)?(?:\s*/\s*\d+(?:\.\d+)?)?")
_SET = re.compile(r"\{[^{}]*\}")
_UNIT = re.compile(r"^(?:%|[A-Za-z]+(?:/[A-Za-z]+)?)$")
_CHOICE = re.compile(r"\(([A-J])\)|\b([A-J])\b")
_TERMINAL_PUNCT = ".,;:!?。"


def normalize_whitespace(text: str) -> str:
    """Strip every line, collapse inner runs of whitespace, drop blank lines."""
    lines = (" ".join(line.split()) for line in text.splitlines())
    return "\n".join(line for line in lines if line)


def _strip_marker(line: str) -> str:
    for _, pattern in STEP_SCHEMES:
        m = pattern.match(line)
        if m:
            return m.group(2)
    return line.strip()


def _scan_steps(raw: str) -> tuple[str | None, list[str], bool]:
    """Return (scheme, step texts, renumbered) for the winning scheme."""
    lines = raw.splitlines()
    for name, pattern in STEP_SCHEMES:
        if not any(pattern.match(line) for line in lines):
            continue
        texts: list[str] = []
        numbers: list[int] = []
        open_step = False
        for line in lines:
            m = pattern.match(line)
            if m:
                numbers.append(int(m.group(1)))
                texts.append(" ".join(m.group(2).split()))
                open_step = True
            elif _ANSWER_MARKER.match(line.strip()):
                # a bare answer line closes the step list
                open_step = False
            elif open_step and line.strip():
                # continuation of the current step
                texts[-1] = " ".join((texts[-1] + " " + line).split())
        return name, texts, numbers != list(range(1, len(numbers) + 1))
    return None, [], False


def parse_chain(raw: str, source: Role, kind: AnswerKind | None = None) -> ReasoningChain:
    """Parse numbered model output into a :class:`ReasoningChain`.

    Steps are renumbered 1..n in order of appearance. A chain with steps
    but no answer marker is flagged ``partial`` and its answer is taken from
    the last step.
    """
    if not raw or not raw.strip():
        raise MalformedChain("empty model output")
    _, texts, renumbered = _scan_steps(raw)
    has_marker = _ANSWER_MARKER.search(raw) is not None
    if not texts and not has_marker:
        raise MalformedChain("no numbered steps and no answer marker")
    flags = []
    if not has_marker:
        flags.append("partial")
    if renumbered:
        flags.append("renumbered")
    steps = tuple(Step(i, t) for i, t in enumerate(texts, 1))
    return ReasoningChain(source, steps, extract_final_answer(raw, kind), raw, tuple(flags))


def render_chain(chain: ReasoningChain, scheme: str = "paren") -> str:
    """Numbered text for ``chain``; adds an answer line unless a step already carries one."""
    fmt = {"paren": "({}) {}", "dot": "{}. {}", "step": "Step {}: {}"}[scheme]
    lines = [fmt.format(s.index, s.text) for s in chain.steps]
    if chain.final_answer and not any(_ANSWER_MARKER.search(s.text) for s in chain.steps):
        lines.append(f"Answer: {chain.final_answer}")
    return "\n".join(lines)


def _clean_answer(text: str) -> str:
    text = text.strip().replace("$", "").strip("*_ ")
    # keep the first sentence; a period followed by a digit is a decimal point
    text = re.split(r"\.(?=\s|$)", text, maxsplit=1)[0]
    return text.strip().rstrip(_TERMINAL_PUNCT).strip()


def _trailing_token(line: str, kind: AnswerKind | None) -> str:
    line = line.replace("$", "").strip().rstrip(_TERMINAL_PUNCT).strip()
    if kind is AnswerKind.FREE_TEXT:
        return line
    if kind is AnswerKind.MULTIPLE_CHOICE:
        matches = list(_CHOICE.finditer(line))
        if matches:
            m = matches[-1]
            return m.group(1) or m.group(2)
        return line
    numbers = list(_NUMBER.finditer(line))
    sets = list(_SET.finditer(line))
    last_set = sets[-1] if sets else None
    last_num = numbers[-1] if numbers else None
    if last_set and (last_num is None or last_set.end() >= last_num.end()):
        return last_set.group(0)
    if last_num is None:
        return line
    token = last_num.group(0).strip()
    rest = line[last_num.end():].strip()
    if rest and _UNIT.match(rest):
        token = f"{token} {rest}"
    return token


def extract_final_answer(chain_text: str, kind: AnswerKind | None = None) -> str:
    """Pull the raw answer string out of a chain's text.

    The last "Final answer:" / "Answer:" marker wins; without one, the
    trailing mathematical token of the last non-empty line is returned.
    """
    if not chain_text or not chain_text.strip():
        raise NoAnswerFound("empty chain text")
    markers = list(_ANSWER_MARKER.finditer(chain_text))
    if markers:
        rest = chain_text[markers[-1].end():]
        lines = rest.splitlines() or [""]
        head = lines[0]
        if not head.strip():
            head = next((ln for ln in lines[1:] if ln.strip()), "")
        answer = _clean_answer(head)
        if answer:
            return answer
    last = next(ln for ln in reversed(chain_text.splitlines()) if ln.strip())
    return _trailing_token(_strip_marker(last), kind)


# -- answer normalization ---------------------------------------------------

_VAR_PREFIX = re.compile(r"^[A-Za-z_]\w*\s*(?:=|\\in|∈)\s*")
_NUMERIC = re.compile(
    r"([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)"
    r"(?:\s*/\s*([-+]?\d*\.?\d+))?"
    r"\s*(?:%|[A-Za-z°][A-Za-z°/\s.]*)?\.?"
)


def _parse_number(text: str) -> float:
    s = text.strip().replace("\\$", "").replace("$", "")
    s = s.lstrip("≈~").strip()
    s = _VAR_PREFIX.sub("", s)
    s = re.sub(r"(?<=\d),(?=\d{3}(?:\D|$))", "", s)
    m = _NUMERIC.fullmatch(s)
    if not m:
        raise UnparseableAnswer(f"not a number: {text!r}")
    try:
        value = Fraction(m.group(1))
        if m.group(2) is not None:
            value /= Fraction(m.group(2))
    except (ValueError, ZeroDivisionError) as exc:
        raise UnparseableAnswer(f"not a number: {text!r}") from exc
    out = float(value)
    if not math.isfinite(out):
        raise UnparseableAnswer(f"not a finite number: {text!r}")
    return out


def _parse_set(text: str) -> frozenset:
    s = text.strip().replace("$", "").replace("\\{", "{").replace("\\}", "}")
    s = _VAR_PREFIX.sub("", s)
    groups = _SET.findall(s)
    if groups:
        body = groups[-1][1:-1]
    elif s:
        body = s
    else:
        raise UnparseableAnswer("empty set answer")
    parts = [p for p in re.split(r",|;|\bor\b|\band\b", body) if p.strip()]
    return frozenset(_parse_number(p) for p in parts)


def _parse_choice(text: str) -> str:
    s = text.strip()
    s = re.sub(r"^(?:the\s+answer\s+is|answer|option|choice)\s*:?\s*", "", s, flags=re.IGNORECASE)
    m = re.fullmatch(r"\(?\s*([A-Za-z])\s*[).:]?", s)
    if m:
        return m.group(1).upper()
    m = re.search(r"\(([A-Za-z])\)", s)
    if m:
        return m.group(1).upper()
    raise UnparseableAnswer(f"not a choice label: {text!r}")


def _parse_free_text(text: str) -> str:
    s = " ".join(text.lower().split()).rstrip(_TERMINAL_PUNCT).strip()
    if not s:
        raise UnparseableAnswer("empty free-text answer")
    return s


def normalize_answer(raw, kind: AnswerKind) -> Canonical:
    """Map a raw answer (or an already-canonical value) to its canonical form."""
    if kind is AnswerKind.NUMERIC and isinstance(raw, (int, float)) and not isinstance(raw, bool):
        if not math.isfinite(raw):
            raise UnparseableAnswer(f"not a finite number: {raw!r}")
        return float(raw)
    if kind is AnswerKind.EXPRESSION_SET and isinstance(raw, (set, frozenset)):
        return frozenset(float(v) for v in raw)
    if not isinstance(raw, str) or not raw.strip():
        raise UnparseableAnswer(f"empty or non-text answer: {raw!r}")
    if kind is AnswerKind.NUMERIC:
        return _parse_number(raw)
    if kind is AnswerKind.EXPRESSION_SET:
        return _parse_set(raw)
    if kind is AnswerKind.MULTIPLE_CHOICE:
        return _parse_choice(raw)
    return _parse_free_text(raw)


def format_canonical(value: Canonical, kind: AnswerKind) -> str:
    """Render a canonical value back to text that normalizes to itself."""
    if kind is AnswerKind.EXPRESSION_SET:
        return "{" + ",".join(repr(v) for v in sorted(value)) + "}"
    if kind is AnswerKind.NUMERIC:
        return repr(value)
    return str(value)


def answers_match(a: Canonical, b: Canonical, kind: AnswerKind, tol: float = DEFAULT_TOLERANCE) -> bool:
    if kind is AnswerKind.NUMERIC:
        return abs(a - b) <= tol
    if kind is AnswerKind.EXPRESSION_SET:
        xs, ys = sorted(a), sorted(b)
        return len(xs) == len(ys) and all(abs(x - y) <= tol for x, y in zip(xs, ys))
    return a == b
