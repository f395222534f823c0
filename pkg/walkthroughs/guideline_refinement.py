"""Feeding directives through the rule-based refiner.

Shows which sentences survive, how they are rephrased, that re-applying the
same directives changes nothing, and that the list never outgrows its cap.

    python3 walkthroughs/guideline_refinement.py
"""

from capcot.domain import Role
from capcot.prompts import initial_prompt
from capcot.sfpr import candidate_guidelines, sfpr_refine

directives = [
    "Require an explicit candidate → constraint check → substitution check pattern before concluding.",
    "Discard x=2 because it violates x ≥ 3.",
    "Check every root (for example x=2) against the domain.",
    "the solver should restate the quantity asked for in the final line",
]

p = initial_prompt(Role.SOLVER)
base = "\n".join(p.base_instructions)
for d in directives:
    print(f"{d!r}\n    -> {candidate_guidelines([d], base) or 'dropped (instance detail only)'}")

once = sfpr_refine(p, directives, cap=3)
twice = sfpr_refine(once, directives, cap=3)
print(f"\nafter one pass: v{once.version}, {len(once.dynamic_guidelines)} guidelines")
print("second pass is a no-op:", twice is once)

more = sfpr_refine(once, ["Track units through every step.", "State each assumption before using it."], cap=3)
print(f"\ncap 3, two more directives -> v{more.version}:")
for g in more.dynamic_guidelines:
    print("  -", g)
