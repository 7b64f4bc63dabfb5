from __future__ import annotations

import numpy as np
import pytest

from influence_ledger import ItemTable, LinearModel, ModelState, PairDistribution


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_items(rng, n=6, d=3, scale=2.0):
    return ItemTable.from_array(rng.normal(scale=scale, size=(n, d)))


def random_linear_state(rng, d, label="theta"):
    return ModelState(label, LinearModel(rng.normal(size=d)))


def random_distribution(rng, n, n_pairs=None):
    ii, jj = np.triu_indices(n, k=1)
    k = len(ii) if n_pairs is None else min(n_pairs, len(ii))
    pick = rng.choice(len(ii), size=k, replace=False)
    return PairDistribution(ii[pick], jj[pick], rng.uniform(0.1, 1.0, size=k))


# Acceptance criteria report one line each; the lines are collected here and
# printed in the terminal summary so they survive output capturing.
ACCEPTANCE_RESULTS: dict[int, str] = {}


def record_acceptance(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_RESULTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
