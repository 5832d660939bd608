import numpy as np
import pytest

from dpselect import core
from dpselect.noise import RandomStream


@pytest.fixture
def stream():
    return RandomStream(20240817)


def make_stream(seed: int = 0) -> RandomStream:
    return RandomStream(seed)


def make_dataset(records=None) -> core.Dataset:
    if records is None:
        records = np.zeros(4)
    return core.Dataset(np.asarray(records))


def forced_state(
    gamma: float = 1.0, p: float | None = None, records=None, seed: int = 0
) -> core.FrameworkState:
    """A framework state with the gate probability pinned by hand when given."""
    dataset = make_dataset(records)
    state = core.init(gamma, dataset, RandomStream(seed))
    if p is not None:
        state.p = float(p)
    return state


class CountingMechanism:
    """Constant-output mechanism that counts invocations and dataset touches."""

    def __init__(self, value: float = 1.0, epsilon: float = 0.1, delta: float = 0.0):
        self.calls = 0
        self.value = value
        self.mechanism = core.Mechanism(run=self._run, epsilon=epsilon, delta=delta)

    def _run(self, dataset, run_stream):
        self.calls += 1
        dataset.fetch()
        return self.value


class CountingHypothesis:
    """Fixed-verdict hypothesis that counts evaluations."""

    def __init__(self, verdict=core.TOP, epsilon: float = 0.1, delta: float = 0.0):
        self.calls = 0
        self.verdict = verdict
        self.hypothesis = core.Hypothesis(
            run=self._run, epsilon=epsilon, delta=delta
        )

    def _run(self, dataset, run_stream):
        self.calls += 1
        dataset.fetch()
        return self.verdict
