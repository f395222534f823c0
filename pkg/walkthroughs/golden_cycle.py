"""One optimization round on sqrt(x-1) = x-3, fully offline.

The scripted backend replays four hand-written outputs: the solver keeps the
spurious root x=2, the challenger squares without a domain check, and the
feedback agent asks for a candidate -> constraint -> substitution check. After
one round the solver prompt carries that check and the round-2 answer is {5}.

    python3 walkthroughs/golden_cycle.py
"""

from pathlib import Path

from capcot.backend import DecodingConfig, Endpoint, ScriptedBackend
from capcot.cycle import CycleConfig, infer, run_optimization
from capcot.evaluation import load_dataset, score
from capcot.prompts import render_prompt

DATA = Path(__file__).parent / "data"

backend = ScriptedBackend.from_file(DATA / "radical_script.json")
endpoint = Endpoint(backend)
(query,) = load_dataset(DATA / "radical.jsonl").items

cfg = CycleConfig(rounds=1, train_queries=(query.id,))
lineage = run_optimization(cfg, [query], endpoint)
record = lineage.record(1)
it = record.interaction(query.id)

print("cold-start strategy:", it.strategy.name, "->", it.strategy.definition)
print("solver said:", it.solver_chain.final_answer, "| challenger said:", it.challenger_chain.final_answer)
print("directive:", it.feedback.solver_directive)
print("next strategy:", it.feedback.next_strategy.name)
print()

p_s = lineage.final_solver
print(f"solver prompt v{p_s.version}, guidelines:")
for g in p_s.dynamic_guidelines:
    print("  -", g)
print()

chain = infer(p_s, query, DecodingConfig(), endpoint, round=2)
print("round-2 answer:", chain.final_answer, "->", score(chain, query.gold).value)
print("backend calls:", backend.count(), "(3 for the round, 1 for inference)")
print()
print("challenger prompt tail:")
print(render_prompt(lineage.prompts_at(1).challenger, None).split("Strategy Definition:")[1].split("Input Task.")[0].strip())
