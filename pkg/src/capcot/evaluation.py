"""Benchmark loading and scoring, with multi-run and temperature-sweep reports."""

from __future__ import annotations

import enum
import json
import math
import statistics
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .backend import DecodingConfig, Endpoint, token_report
from .cycle import infer
from .domain import AnswerKind, GoldAnswer, Query, ReasoningChain, Role, RolePrompt, canonical_json
from .errors import EmptyDataset, UnparseableAnswer, UnreadableFile
from .parsing import DEFAULT_TOLERANCE, answers_match, normalize_answer
from .prompts import initial_prompt

FORMATS = ("jsonl-qa", "gsm8k-style", "mc-style")
DEFAULT_RUNS = 3
ABLATION_RUNS = 5
DEFAULT_TEMPERATURES = tuple(round(0.1 * i, 1) for i in range(11))


class Outcome(str, enum.Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    UNSCORABLE = "unscorable"


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


@dataclass(frozen=True)
class Dataset:
    name: str
    items: tuple[Query, ...]
    format: str = "jsonl-qa"
    rejects: tuple[Reject, ...] = ()

    def __post_init__(self):
        if any(q.gold is None for q in self.items):
            raise ValueError("every dataset item needs a gold answer")
        ids = [q.id for q in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("dataset ids must be unique")

    def __len__(self) -> int:
        return len(self.items)

    def limit(self, n: int | None) -> "Dataset":
        if n is None:
            return self
        return Dataset(self.name, self.items[:n], self.format, self.rejects)


def _gold(raw, kind: AnswerKind) -> GoldAnswer:
    raw = str(raw)
    return GoldAnswer(kind, normalize_answer(raw, kind), raw)


def _record_to_query(rec: dict, fmt: str, default_id: str) -> Query:
    if fmt == "jsonl-qa":
        kind = AnswerKind(rec.get("kind", AnswerKind.FREE_TEXT.value))
        text = rec.get("question", rec.get("text"))
        answer = rec["answer"]
    elif fmt == "gsm8k-style":
        kind = AnswerKind.NUMERIC
        text = rec["question"]
        solution = str(rec["answer"])
        if "####" not in solution:
            raise ValueError("answer has no '####' final-answer line")
        answer = solution.rsplit("####", 1)[1].strip()
    else:
        kind = AnswerKind.MULTIPLE_CHOICE
        choices = rec["choices"]
        if isinstance(choices, dict):
            labelled = sorted(choices.items())
        else:
            labelled = [(chr(ord("A") + i), c) for i, c in enumerate(choices)]
        text = rec["question"] + "\n" + "\n".join(f"({k}) {v}" for k, v in labelled)
        answer = rec["answer"]
        if isinstance(answer, int):
            answer = chr(ord("A") + answer)
    if not isinstance(text, str):
        raise ValueError("missing question text")
    return Query(str(rec.get("id", default_id)), text, kind, _gold(answer, kind))


def load_dataset(path: str | Path, format: str = "jsonl-qa", name: str | None = None) -> Dataset:
    """Read a JSONL benchmark file. Bad records are collected, not fatal."""
    if format not in FORMATS:
        raise ValueError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    items: list[Query] = []
    rejects: list[Reject] = []
    seen: set[str] = set()
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            q = _record_to_query(rec, format, f"{path.stem}-{n}")
        except KeyError as exc:
            rejects.append(Reject(n, f"missing field {exc.args[0]!r}"))
            continue
        except (ValueError, UnparseableAnswer) as exc:
            rejects.append(Reject(n, str(exc)))
            continue
        if q.id in seen:
            rejects.append(Reject(n, f"duplicate id {q.id!r}"))
            continue
        seen.add(q.id)
        items.append(q)
    if not items:
        raise EmptyDataset(f"{path} has no usable records ({len(rejects)} rejected)")
    return Dataset(name or path.stem, tuple(items), format, tuple(rejects))


def score(chain: ReasoningChain, gold: GoldAnswer, tol: float = DEFAULT_TOLERANCE) -> Outcome:
    if not chain.final_answer:
        return Outcome.UNSCORABLE
    try:
        value = normalize_answer(chain.final_answer, gold.kind)
    except UnparseableAnswer:
        return Outcome.UNSCORABLE
    return Outcome.CORRECT if answers_match(value, gold.canonical, gold.kind, tol) else Outcome.INCORRECT


def accuracy(outcomes: Sequence[Outcome]) -> float:
    # unscorable stays in the denominator
    if not outcomes:
        return 0.0
    return sum(o is Outcome.CORRECT for o in outcomes) / len(outcomes)


def mean_variation(values: Sequence[float], method: str = "mad") -> float:
    """Spread of accuracy percentages: mean absolute deviation (default) or population std."""
    if not values:
        raise ValueError("mean_variation needs at least one value")
    if method == "std":
        return statistics.pstdev(values)
    if method != "mad":
        raise ValueError(f"unknown method {method!r}")
    mu = math.fsum(values) / len(values)
    return math.fsum(abs(v - mu) for v in values) / len(values)


@dataclass(frozen=True)
class RunResult:
    run_id: str
    accuracy: float
    outcomes: dict[str, Outcome]
    answers: dict[str, str]

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "accuracy": self.accuracy,
                "outcomes": {k: v.value for k, v in self.outcomes.items()}, "answers": self.answers}


@dataclass(frozen=True)
class TemperaturePoint:
    temperature: float
    accuracies: tuple[float, ...]

    @property
    def mean(self) -> float:
        return math.fsum(self.accuracies) / len(self.accuracies)

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "accuracies": list(self.accuracies), "mean_accuracy": self.mean}


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    size: int
    prompt_hash: str
    prompt_version: int
    runs: tuple[RunResult, ...] = ()
    mean_variation: float = 0.0
    per_temperature: tuple[TemperaturePoint, ...] = ()
    tokens: tuple[dict, ...] = ()
    variation_method: str = "mad"

    @property
    def accuracies(self) -> tuple[float, ...]:
        return tuple(r.accuracy for r in self.runs)

    @property
    def mean_accuracy(self) -> float:
        return math.fsum(self.accuracies) / len(self.accuracies) if self.runs else 0.0

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "size": self.size,
            "prompt_hash": self.prompt_hash,
            "prompt_version": self.prompt_version,
            "accuracies": list(self.accuracies),
            "mean_accuracy": self.mean_accuracy,
            "mean_variation": self.mean_variation,
            "variation_method": self.variation_method,
            "per_temperature": [p.to_dict() for p in self.per_temperature],
            "runs": [r.to_dict() for r in self.runs],
            "tokens": list(self.tokens),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def to_table(self) -> str:
        lines = [f"dataset {self.dataset} ({self.size} items), prompt v{self.prompt_version} {self.prompt_hash[:12]}"]
        if self.per_temperature:
            lines.append(f"{'temp':>6}  {'accuracy %':>10}")
            for p in self.per_temperature:
                lines.append(f"{p.temperature:>6.1f}  {100 * p.mean:>10.2f}")
        else:
            for r in self.runs:
                lines.append(f"{r.run_id:>12}  {100 * r.accuracy:>7.2f}%")
        lines.append(f"mean accuracy {100 * self.mean_accuracy:.2f}%  mean variation {self.mean_variation:.4f} pp")
        for t in self.tokens:
            lines.append(f"tokens[{t['group']}] total {t['total_tokens']}  per question {t['mean_total_per_question']:.1f}")
        return "\n".join(lines)


def _run_once(p_s: RolePrompt, dataset: Dataset, cfg: DecodingConfig, endpoint: Endpoint,
              run_id: str, round: int, tol: float, workers: int) -> RunResult:
    def one(q: Query):
        chain = infer(p_s, q, cfg, endpoint, round=round, run_id=run_id, dataset=dataset.name)
        return q.id, chain.final_answer, score(chain, q.gold, tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, dataset.items))
    else:
        results = [one(q) for q in dataset.items]
    outcomes = {qid: o for qid, _, o in results}
    return RunResult(run_id, accuracy(list(outcomes.values())), outcomes, {qid: a for qid, a, _ in results})


def _tokens(endpoint: Endpoint, run_ids: set[str]) -> tuple[dict, ...]:
    recs = [r for r in endpoint.ledger.records if r.run_id in run_ids]
    return tuple(row.to_dict() for row in token_report(recs, "dataset"))


def evaluate(p_s: RolePrompt, dataset: Dataset, runs: int = DEFAULT_RUNS, cfg: DecodingConfig = DecodingConfig(),
             endpoint: Endpoint | None = None, *, round: int = 1, tol: float = DEFAULT_TOLERANCE,
             workers: int = 1, run_prefix: str = "eval", method: str = "mad") -> EvalReport:
    """Run ``runs`` independent inference passes and report accuracy per run."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if endpoint is None:
        raise ValueError("evaluate needs an endpoint")
    results = tuple(_run_once(p_s, dataset, cfg, endpoint, f"{run_prefix}-{k}", round, tol, workers)
                    for k in range(1, runs + 1))
    mv = mean_variation([100 * r.accuracy for r in results], method)
    return EvalReport(dataset.name, len(dataset), p_s.digest(), p_s.version, results, mv,
                      tokens=_tokens(endpoint, {r.run_id for r in results}), variation_method=method)


def temperature_sweep(p_s: RolePrompt, dataset: Dataset, temps: Sequence[float] = DEFAULT_TEMPERATURES,
                      runs_per_temp: int = 1, cfg: DecodingConfig = DecodingConfig(),
                      endpoint: Endpoint | None = None, *, round: int = 1, tol: float = DEFAULT_TOLERANCE,
                      workers: int = 1, method: str = "mad") -> EvalReport:
    """Accuracy at each temperature plus the spread of per-temperature means."""
    if not temps:
        raise ValueError("temps must be non-empty")
    if any(not 0.0 <= t <= 1.0 for t in temps):
        raise ValueError("temperatures must lie in [0, 1]")
    if endpoint is None:
        raise ValueError("temperature_sweep needs an endpoint")
    points, all_runs = [], []
    for t in temps:
        runs = [_run_once(p_s, dataset, cfg.with_temperature(t), endpoint, f"sweep-t{t:.2f}-{k}",
                          round, tol, workers) for k in range(1, runs_per_temp + 1)]
        all_runs.extend(runs)
        points.append(TemperaturePoint(t, tuple(r.accuracy for r in runs)))
    mv = mean_variation([100 * p.mean for p in points], method)
    return EvalReport(dataset.name, len(dataset), p_s.digest(), p_s.version, tuple(all_runs), mv,
                      tuple(points), _tokens(endpoint, {r.run_id for r in all_runs}), method)


@dataclass(frozen=True)
class Comparison:
    baseline: EvalReport
    optimized: EvalReport | None = None

    def to_dict(self) -> dict:
        return {
            "baseline_prompt_hash": self.baseline.prompt_hash,
            "optimized_prompt_hash": None if self.optimized is None else self.optimized.prompt_hash,
            "baseline": self.baseline.to_dict(),
            "optimized": None if self.optimized is None else self.optimized.to_dict(),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def to_table(self) -> str:
        parts = ["== plain CoT (round-0 solver prompt)", self.baseline.to_table()]
        if self.optimized is not None:
            parts += ["== optimized solver prompt", self.optimized.to_table()]
        return "\n".join(parts)


def cot_baseline(dataset: Dataset, cfg: DecodingConfig = DecodingConfig(), endpoint: Endpoint | None = None, *,
                 optimized: RolePrompt | None = None, runs: int = DEFAULT_RUNS, optimized_round: int = 1,
                 tol: float = DEFAULT_TOLERANCE, workers: int = 1) -> Comparison:
    """Evaluate the unrefined solver prompt, optionally next to an optimized one."""
    base = evaluate(initial_prompt(Role.SOLVER), dataset, runs, cfg, endpoint, round=1, tol=tol,
                    workers=workers, run_prefix="baseline")
    opt = None
    if optimized is not None:
        opt = evaluate(optimized, dataset, runs, cfg, endpoint, round=optimized_round, tol=tol,
                       workers=workers, run_prefix="optimized")
    return Comparison(base, opt)
