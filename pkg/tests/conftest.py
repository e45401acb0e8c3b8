from __future__ import annotations

import json

import pytest

from pentree.graph import AttackGraph, load_graph


def graph_doc(edges: dict[str, list[str]], initial: str = "A", **overrides) -> dict:
    tasks = [
        {
            "id": task_id,
            "name": f"Task {task_id}",
            "tactic": "test",
            "description": f"Do the {task_id} step of the exercise.",
            "next": list(next_ids),
        }
        for task_id, next_ids in edges.items()
    ]
    doc = {"schema_version": 1, "initial_task": initial, "tasks": tasks}
    doc.update(overrides)
    return doc


def graph_from_edges(edges: dict[str, list[str]], initial: str = "A") -> AttackGraph:
    return load_graph(json.dumps(graph_doc(edges, initial)))


@pytest.fixture
def line_graph() -> AttackGraph:
    return graph_from_edges({"A": ["B"], "B": ["C"], "C": []})


@pytest.fixture
def fan_graph() -> AttackGraph:
    return graph_from_edges({"A": ["B", "C", "D"], "B": ["E"], "C": [], "D": [], "E": []})
