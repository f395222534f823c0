"""Adversarial prompt refinement for step-by-step LLM reasoning.

Role agents share one chat backend. After every round their feedback is
folded back into the role prompts; inference uses only the solver prompt.
"""

from .agents import challenge, critique, format_feedback, parse_feedback, sample_error_strategy, solve
from .backend import (
    CompletionRequest,
    CompletionResponse,
    DecodingConfig,
    Endpoint,
    OpenAIBackend,
    ScriptedBackend,
    TokenLedger,
    complete,
    token_report,
)
from .cycle import CycleConfig, PromptLineage, Prompts, infer, run_optimization, run_round
from .domain import (
    AnswerKind,
    ErrorStrategy,
    FeedbackBundle,
    FeedbackItem,
    FeedbackLedger,
    GoldAnswer,
    Query,
    ReasoningChain,
    Role,
    RolePrompt,
    Step,
)
from .evaluation import (
    Dataset,
    EvalReport,
    cot_baseline,
    evaluate,
    load_dataset,
    mean_variation,
    score,
    temperature_sweep,
)
from .parsing import extract_final_answer, normalize_answer, parse_chain
from .prompts import initial_prompt, normalize_guideline, render_prompt
from .sfpr import sfpr_refine, sfpr_refine_challenger, sfpr_refine_self

__version__ = "0.1.0"

__all__ = [
    "AnswerKind", "CompletionRequest", "CompletionResponse", "CycleConfig", "Dataset", "DecodingConfig",
    "Endpoint", "ErrorStrategy", "EvalReport", "FeedbackBundle", "FeedbackItem", "FeedbackLedger",
    "GoldAnswer", "OpenAIBackend", "PromptLineage", "Prompts", "Query", "ReasoningChain", "Role",
    "RolePrompt", "ScriptedBackend", "Step", "TokenLedger", "challenge", "complete", "cot_baseline",
    "critique", "evaluate", "extract_final_answer", "format_feedback", "infer", "initial_prompt",
    "load_dataset", "mean_variation", "normalize_answer", "normalize_guideline", "parse_chain",
    "parse_feedback", "render_prompt", "run_optimization", "run_round", "sample_error_strategy", "score",
    "sfpr_refine", "sfpr_refine_challenger", "sfpr_refine_self", "solve", "temperature_sweep", "token_report",
]
