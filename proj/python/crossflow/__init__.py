"""Python surface of the workflow orchestration runtime.

The heavy lifting happens in the C++ extension; this wrapper converts between
Python objects and the JSON documents the extension exchanges.
"""

import json
from typing import Any, Dict, List, Optional, Sequence, Union

from crossflow import _crossflow

JsonDoc = Union[Dict[str, Any], str]

__all__ = [
    "fixture_names",
    "fixture_workflow",
    "compile_workflow",
    "workflow_diagnostics",
    "run_scenario",
    "verify_scenario",
    "emit_fixtures",
    "report_diff",
    "render_function_id",
    "pop_and_merge",
]


def _as_text(doc: JsonDoc) -> str:
    return doc if isinstance(doc, str) else json.dumps(doc)


def fixture_names() -> List[str]:
    """Names of the built-in example workflows."""
    return list(_crossflow.fixture_names())


def fixture_workflow(name: str) -> Dict[str, Any]:
    """The workflow definition document for a built-in example."""
    return json.loads(_crossflow.fixture_workflow(name))


def compile_workflow(workflow: JsonDoc) -> Dict[str, Any]:
    """Compiles a workflow definition into its per-function sub-graph set.

    Raises ValueError (from the extension) when the definition is invalid.
    """
    return json.loads(_crossflow.compile_workflow(_as_text(workflow)))


def workflow_diagnostics(workflow: JsonDoc) -> List[str]:
    """Parse and compile diagnostics for a workflow definition (empty = valid)."""
    return list(_crossflow.workflow_diagnostics(_as_text(workflow)))


def run_scenario(scenario: JsonDoc) -> Dict[str, Any]:
    """Runs a scenario document and returns the report."""
    return json.loads(_crossflow.run_scenario(_as_text(scenario)))


def verify_scenario(scenario: JsonDoc) -> List[str]:
    """Sweeps crash injections over a scenario; returns invariant violations."""
    return list(_crossflow.verify_scenario(_as_text(scenario)))


def emit_fixtures(out_dir: str) -> None:
    """Writes the built-in workflows, sub-graphs, topology and scenarios."""
    _crossflow.emit_fixtures(out_dir)


def report_diff(first: JsonDoc, second: JsonDoc) -> List[str]:
    """Paths at which two report documents differ."""
    return list(_crossflow.report_diff(_as_text(first), _as_text(second)))


def render_function_id(
    workflow_id: str, name: str, step: int, branch: Optional[Sequence[int]] = None
) -> str:
    """Renders the globally unique id of one function execution."""
    return _crossflow.render_function_id(workflow_id, name, step, list(branch or []))


def pop_and_merge(stacks: Sequence[Sequence[int]]) -> List[int]:
    """Branch stack surviving a fan-in of the given participant stacks."""
    return list(_crossflow.pop_and_merge([list(s) for s in stacks]))
