"""Gated selection and testing over a shared pass probability, with accounting.

A framework state draws one gate probability p (CDF x**gamma) at creation
and then mediates all dataset access through two primitives:

* ``selection(tau, mechanisms)`` runs each mechanism up to tau times, each
  run gated by an independent Ber(p) coin, and returns the largest output
  collected, or EMPTY when no coin fired.
* ``test(hypothesis)`` gates a binary TOP/BOT hypothesis behind one Ber(p)
  coin and returns BOT without touching the dataset when the coin misses.

The ledger records one charged unit per selection call and per TOP response;
``pure_dp_cost`` and ``approx_dp_cost`` turn the counters into budgets.  All
mechanisms and hypotheses fed to one state must declare the same epsilon.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

from .errors import LedgerError, ParameterError
from .noise import RandomStream, sample_pass_probability

_EPSILON_MATCH_TOL = 1e-12


class Verdict(enum.Enum):
    """The two answers a gated hypothesis can give."""

    TOP = "TOP"
    BOT = "BOT"


TOP = Verdict.TOP
BOT = Verdict.BOT


class _EmptySelection:
    __slots__ = ()

    def __repr__(self) -> str:
        return "EMPTY"


#: Sentinel returned by ``selection`` when no gated run fired.
EMPTY = _EmptySelection()


class Dataset:
    """A finite multiset of records with an instrumented access counter.

    Mechanism and hypothesis bodies read records through ``fetch``, which
    counts accesses; tests rely on the counter to confirm that gated-out
    evaluations never touch the data.
    """

    def __init__(self, records):
        self.records = records
        self.access_count = 0

    def fetch(self, accesses: int = 1):
        self.access_count += accesses
        return self.records

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class Mechanism:
    """A randomized map from dataset to an ordered output value.

    ``run`` receives the dataset and a stream; ``epsilon``/``delta`` are the
    declared privacy parameters of one run.  The framework never inspects
    the body, only the declaration.
    """

    run: Callable[[Dataset, RandomStream], Any]
    epsilon: float
    delta: float = 0.0


@dataclass(frozen=True)
class Hypothesis:
    """A randomized map from dataset to a TOP/BOT verdict.

    ``top_probability``, when provided, must return the exact probability
    that one evaluation of ``run`` on this dataset answers TOP.  Batch
    helpers use it to resolve long all-BOT stretches without evaluating the
    body once per coin; it is the hypothesis author's own declaration, the
    framework still never introspects the body.
    """

    run: Callable[[Dataset, RandomStream], Verdict]
    epsilon: float
    delta: float = 0.0
    top_probability: Callable[[Dataset], float] | None = None


class PrivacyCost(NamedTuple):
    epsilon: float
    delta: float


@dataclass
class AccountantLedger:
    """Charged-event counters for one framework state.

    ``base_epsilon`` is pinned by the first mechanism or hypothesis seen;
    anything declaring a different epsilon is rejected, because the cost
    formulas assume a single per-access epsilon.
    """

    base_epsilon: float | None = None
    selection_calls: int = 0
    top_responses: int = 0
    delta_mass: float = 0.0

    def register(self, epsilon: float) -> None:
        if not epsilon >= 0:
            raise ParameterError(f"declared epsilon must be nonnegative, got {epsilon}")
        if self.base_epsilon is None:
            self.base_epsilon = float(epsilon)
        elif abs(epsilon - self.base_epsilon) > _EPSILON_MATCH_TOL:
            raise LedgerError(
                f"mixed epsilons: ledger is pinned to {self.base_epsilon}, got {epsilon}"
            )


def pure_dp_cost(ledger: AccountantLedger, gamma: float) -> PrivacyCost:
    """Pure budget (2*c1 + 2*c2 + gamma) * eps, paired with accrued delta."""
    eps = ledger.base_epsilon or 0.0
    total = (2 * ledger.selection_calls + 2 * ledger.top_responses + gamma) * eps
    return PrivacyCost(total, ledger.delta_mass)


def approx_dp_cost(
    ledger: AccountantLedger, gamma: float, delta_target: float
) -> PrivacyCost:
    """Approximate budget that composes TOP charges at the sqrt rate.

    Minimises 12*c2*a*eps**2 + ln(1/delta)/(a - 1) over orders a > 1 (the
    minimiser is a* = 1 + sqrt(ln(1/delta) / (12*c2*eps**2))) and adds
    gamma*eps plus 2*eps per selection call.  With no TOP charges the pure
    budget is already optimal and is returned unchanged.
    """
    if not 0 < delta_target < 1:
        raise ParameterError(f"delta_target must lie in (0, 1), got {delta_target}")
    c2 = ledger.top_responses
    if c2 == 0:
        return pure_dp_cost(ledger, gamma)
    eps = ledger.base_epsilon or 0.0
    if eps == 0.0:
        return PrivacyCost(0.0, delta_target + ledger.delta_mass)
    log_term = math.log(1.0 / delta_target)
    total = (
        2 * ledger.selection_calls * eps
        + gamma * eps
        + 12 * c2 * eps * eps
        + 4 * math.sqrt(3 * c2 * log_term) * eps
    )
    return PrivacyCost(total, delta_target + ledger.delta_mass)


@dataclass
class FrameworkState:
    """One sampled gate probability plus everything charged against it.

    Calls are strictly sequential; a state is single-threaded and all its
    randomness comes from the one stream it was created with.  Constructing
    a state directly (rather than through ``init``) fixes p by hand, which
    tests use to force degenerate gates.
    """

    gamma: float
    p: float
    dataset: Dataset
    stream: RandomStream
    ledger: AccountantLedger = field(default_factory=AccountantLedger)

    def selection(self, tau: int, mechanisms: Sequence[Mechanism]):
        """Run each mechanism tau gated times; return the best output or EMPTY.

        Charges one selection unit and tau * sum(delta_i) regardless of how
        many coins fired.  Outputs are compared with ``>``, so mechanism
        outputs must share a total order.
        """
        if not isinstance(tau, int) or tau < 1:
            raise ParameterError(f"tau must be a positive integer, got {tau}")
        if not mechanisms:
            raise ParameterError("selection needs at least one mechanism")
        for mechanism in mechanisms:
            self.ledger.register(mechanism.epsilon)
        generator = self.stream.generator
        best = None
        for mechanism in mechanisms:
            fired = int((generator.random(tau) < self.p).sum())
            for _ in range(fired):
                value = mechanism.run(self.dataset, self.stream)
                if best is None or value > best:
                    best = value
        self.ledger.selection_calls += 1
        self.ledger.delta_mass += tau * sum(m.delta for m in mechanisms)
        return EMPTY if best is None else best

    def test(self, hypothesis: Hypothesis) -> Verdict:
        """Gate one hypothesis evaluation behind a Ber(p) coin.

        A missed coin returns BOT with zero dataset accesses and zero
        charge.  A fired coin evaluates the body (accruing its delta) and
        charges one unit only when the answer is TOP.
        """
        self.ledger.register(hypothesis.epsilon)
        if self.stream.generator.random() >= self.p:
            return BOT
        self.ledger.delta_mass += hypothesis.delta
        verdict = hypothesis.run(self.dataset, self.stream)
        if not isinstance(verdict, Verdict):
            raise ParameterError(f"hypothesis returned {verdict!r}, not a Verdict")
        if verdict is TOP:
            self.ledger.top_responses += 1
        return verdict

    def test_batch(self, hypothesis: Hypothesis, count: int) -> bool:
        """Run up to ``count`` tests, stopping at the first TOP.

        Returns True when every test answered BOT.  Distribution, charging,
        and halting match a sequential loop over ``test`` that breaks on
        TOP.  When the hypothesis declares its exact TOP probability (and
        is pure-DP), the whole stretch is resolved from one uniform draw;
        otherwise the loop runs call by call.
        """
        if not isinstance(count, int) or count < 1:
            raise ParameterError(f"count must be a positive integer, got {count}")
        if hypothesis.top_probability is None:
            for _ in range(count):
                if self.test(hypothesis) is TOP:
                    return False
            return True
        if hypothesis.delta != 0.0:
            raise ParameterError(
                "analytic batching needs a pure-DP hypothesis (delta accrual is per evaluation)"
            )
        self.ledger.register(hypothesis.epsilon)
        rho = self.p * float(hypothesis.top_probability(self.dataset))
        if not 0.0 <= rho <= 1.0:
            raise ParameterError(f"declared TOP probability gave gate rate {rho}")
        log_all_bot = count * math.log1p(-rho) if rho < 1.0 else -math.inf
        passed = bool(self.stream.generator.random() < math.exp(log_all_bot))
        if not passed:
            self.ledger.top_responses += 1
        return passed

    def pure_cost(self) -> PrivacyCost:
        return pure_dp_cost(self.ledger, self.gamma)

    def approx_cost(self, delta_target: float) -> PrivacyCost:
        return approx_dp_cost(self.ledger, self.gamma, delta_target)


def init(gamma: float, dataset: Dataset, stream: RandomStream) -> FrameworkState:
    """Draw the gate probability once and wrap it in a fresh state."""
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    p = sample_pass_probability(stream, gamma)
    return FrameworkState(gamma=float(gamma), p=p, dataset=dataset, stream=stream)
