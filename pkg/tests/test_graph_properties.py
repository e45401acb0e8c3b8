from __future__ import annotations

import pytest

from stt_ops import run_backtrack_storm, run_random_session


@pytest.mark.parametrize("seed", range(200))
def test_random_operation_sequences_hold_invariants(seed: int) -> None:
    run_random_session(seed)


@pytest.mark.parametrize("seed", range(50))
def test_backtracking_always_terminates(seed: int) -> None:
    run_backtrack_storm(seed)
