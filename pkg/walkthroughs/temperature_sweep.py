"""Temperature sweep over the default 0.0-1.0 grid with a toy backend.

The backend answers item i correctly only while i < 10 * (1 - temperature),
so accuracy falls in 10-point steps. The report gives per-temperature
accuracy and the mean absolute deviation of those percentages.

    python3 walkthroughs/temperature_sweep.py
"""

from capcot.backend import CompletionResponse, Endpoint
from capcot.domain import AnswerKind, GoldAnswer, Query, Role
from capcot.evaluation import Dataset, temperature_sweep
from capcot.prompts import initial_prompt

items = tuple(Query(f"q{i}", f"What is {i} + {i}?", AnswerKind.NUMERIC,
                    GoldAnswer(AnswerKind.NUMERIC, float(2 * i), str(2 * i))) for i in range(10))


class Cooling:
    def send(self, request):
        i = int(request.tag.query_id[1:])
        ok = i < round(10 * (1 - request.decoding.temperature))
        return CompletionResponse(f"(1) add\nAnswer: {2 * i if ok else -1}")


report = temperature_sweep(initial_prompt(Role.SOLVER), Dataset("toy", items), endpoint=Endpoint(Cooling()))
print(report.to_table())
