"""plankit: a small runtime for LLM function-calling plans.

Parses numbered tool-call plans with `$N` placeholder references into
dependency DAGs, executes them against a simulated device, retrieves
query-relevant tool subsets to keep planner prompts small, synthesizes
and validates function-calling datasets, and scores predicted plans with
a labeled-DAG isomorphism success metric.
"""

__version__ = "0.1.0"
