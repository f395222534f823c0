"""Role prompt templates, deterministic rendering, guideline keys."""

from __future__ import annotations

import re
from collections.abc import Sequence

from .domain import Query, Role, RolePrompt

GUIDELINES_HEADER = "Dynamic Guidelines (Iteratively Updated):"
STRATEGY_HEADER = "Strategy Definition:"
TASK_HEADER = "Input Task."
QUESTION_PLACEHOLDER = "{Input Question}"

SOLVER_BLOCKS = (
    "Role Definition. You are an expert reasoning engine designed to solve complex problems "
    "with high accuracy and stability. Your goal is to derive the correct answer through a "
    "rigorous, step-by-step Chain-of-Thought (CoT) process.",
    "Base Instructions.\n"
    "(1) Analyze the request: identify the core question, key variables, and constraints.\n"
    "(2) Step-by-step derivation: break the problem into logical sub-steps; for each step, "
    "explicitly state the premise and conclusion.\n"
    "(3) Self-verification: briefly check the logic of each step before moving to the next "
    "to prevent error propagation.\n"
    "(4) Final answer: conclude with a clear and concise final answer.",
)
SOLVER_INSTRUCTION = "Instruction: Provide your reasoning chain and final answer."

CHALLENGER_BLOCKS = (
    "Role Definition. You are an adaptive adversarial challenger. Your goal is not to solve "
    "the problem correctly. Instead, generate a plausible but incorrect reasoning chain that "
    "serves as a hard negative sample to test the solver's robustness.",
    "Core Objective. Construct a reasoning chain that matches the style and tone of a correct "
    "solution but contains a specific flaw dictated by the adversarial instruction. The error "
    "should be subtle enough to mislead a careless solver, yet logically fatal to the final answer.",
    "Adversarial Instruction (Input). This instruction specifies the error type you must "
    "inject. It can be a predefined category or a context-aware directive.",
    "Execution Guidelines.\n"
    "(1) Plausibility is key: avoid obvious nonsense; keep a high-quality step-by-step structure.\n"
    "(2) Targeted sabotage: inject the error only as required by the Strategy Definition; keep "
    "the rest coherent to make the flaw hard to spot.\n"
    "(3) Incorrect conclusion: ensure the reasoning leads to a final answer that is wrong and "
    "distinct from the ground truth.",
)
CHALLENGER_INSTRUCTION = (
    "Instruction: Generate the adversarial reasoning chain following the strategy definition above."
)
STRATEGY_PREAMBLE = (
    "Detailed constraints for the current strategy are provided below. "
    "You must follow them when constructing the error."
)

FEEDBACK_BLOCKS = (
    "Role Definition. You are the meta-optimization controller. Your objective is to drive the "
    "solver (G_S) toward a logically flawless Chain-of-Thought. You do this by running an "
    "evolutionary loop with the challenger (G_C). You must execute a strict two-step process: "
    "first, extract high-level reasoning principles to strengthen the solver; second, design a "
    "new adversarial strategy to stress-test the solver from a different angle in the next cycle.",
    "Input Context.\n"
    "(1) Question: the problem statement.\n"
    "(2) Challenger output (C_C): the adversarial reasoning chain (negative sample).\n"
    "(3) Solver output (C_S): the solver's reasoning chain (target sample).",
    "Step 1: Comparative Analysis and Solver Improvement (Optimizing G_S).\n"
    "Dissect C_C to identify the fundamental logical flaw or structural gap it exploits. Assess "
    "whether C_S is robust enough to prevent this kind of flaw; even if C_S is correct, identify "
    "weaknesses in rigor, clarity, or verification. Then synthesize a high-level improvement "
    "principle for G_S. The goal is to raise the solver's overall reasoning standard rather than "
    "patching a single case.",
    "Step 2: Strategy Diversification (Directing G_C).\n"
    "Assume the solver will adapt to the previous error type. Choose a distinct, unexplored "
    "dimension of reasoning to test next, and formulate a new adversarial strategy that targets a "
    "potential weakness in C_S. This directive will be used to populate the challenger's "
    "\"Strategy Definition\" in the next cycle.",
    "Output Format.\n"
    "[Step 1: Comparative Logic Analysis]\n"
    "Adversarial Logic Flaw: [technical description of the flaw in C_C].\n"
    "Solver Logic Assessment: [evaluation of C_S's robustness regarding this flaw].\n"
    "For each weak step, one line: {Chain: C_S or C_C; Step: t; Issue type: missing assumption, "
    "incorrect inference, unclear step, etc.; Suggestion: a short, actionable fix.}\n"
    "[Step 1 Output: Logical Enhancement Directive for G_S]\n"
    "Imperative principle to elevate reasoning rigor:\n"
    "[directive for G_S]\n"
    "[Step 2: Strategic Rationale]\n"
    "Evolutionary Direction: [why the new adversarial focus is distinct and necessary].\n"
    "[Step 2 Output: Next-Step Adversarial Strategy for G_C]\n"
    "Strategy Name: [formal strategy designation].\n"
    "Strategy Definition: [precise directive for the next negative sample].",
)
FEEDBACK_INSTRUCTION = "Instruction: Execute the two-step process and answer in the output format above."

_TEMPLATES = {
    Role.SOLVER: (SOLVER_BLOCKS, SOLVER_INSTRUCTION),
    Role.CHALLENGER: (CHALLENGER_BLOCKS, CHALLENGER_INSTRUCTION),
    Role.FEEDBACK: (FEEDBACK_BLOCKS, FEEDBACK_INSTRUCTION),
}


def initial_prompt(role: Role) -> RolePrompt:
    """Version-0 prompt for ``role`` with an empty guideline section."""
    blocks, instruction = _TEMPLATES[role]
    return RolePrompt(role=role, base_instructions=blocks, instruction=instruction)


def initial_prompts() -> dict[Role, RolePrompt]:
    return {role: initial_prompt(role) for role in Role}


def render_prompt(p: RolePrompt, q: Query | None, extra: Sequence[tuple[str, str]] = ()) -> str:
    """Render ``p`` for query ``q``.

    ``extra`` holds ``(label, text)`` context blocks placed after the question,
    e.g. the two chains shown to the feedback agent. With ``q=None`` the
    question placeholder is kept, which is how stored prompts are displayed.
    """
    parts = list(p.base_instructions)
    guidelines = [GUIDELINES_HEADER]
    guidelines += [f"({i}) {g}" for i, g in enumerate(p.dynamic_guidelines, 1)]
    parts.append("\n".join(guidelines))
    if p.role is Role.CHALLENGER:
        strategy = [STRATEGY_HEADER, STRATEGY_PREAMBLE]
        if p.strategy_slot is not None:
            strategy.append(f"Strategy Name: {p.strategy_slot.name}")
            strategy.append(f"Definition: {p.strategy_slot.definition}")
        else:
            strategy.append("Definition: (none)")
        parts.append("\n".join(strategy))
    task = [TASK_HEADER, f"Question: {q.text if q is not None else QUESTION_PLACEHOLDER}"]
    for label, text in extra:
        task.append(f"{label}:\n{text}")
    task.append(p.instruction)
    parts.append("\n".join(task))
    return "\n\n".join(parts) + "\n"


# -- guideline identity -----------------------------------------------------

DUPLICATE_JACCARD = 0.8


def normalize_guideline(g: str) -> tuple[str, ...]:
    """Order-free token multiset key: lowercase, punctuation stripped."""
    return tuple(sorted(re.findall(r"[a-z0-9]+", g.lower())))


def jaccard(a: str, b: str) -> float:
    sa, sb = set(normalize_guideline(a)), set(normalize_guideline(b))
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def is_duplicate(a: str, b: str, threshold: float = DUPLICATE_JACCARD) -> bool:
    return normalize_guideline(a) == normalize_guideline(b) or jaccard(a, b) >= threshold
