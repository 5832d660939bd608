"""The 0-favored coin game and exact divergence oracles for it.

An adversary feeds Bernoulli pairs (p_i, q_i) with q_i <= p_i and two-sided
exp(eps) closeness of both the pair and its complements.  The game flips the
p-coin when a hidden bit is 0 and the q-coin when it is 1, revealing each
outcome, and halts once k ones have appeared.  The oracles here compute, for
round-indexed deterministic schedules, the exact halting-time law of the
single-success game, its Renyi and max divergences at any truncation
horizon, and full-transcript divergences of the multi-success game.

Conventions: the halting round of the k = 1 game has probability
Pr[halt = i] = prod_{j<i} (1 - p_j) * p_i, and a truncation at horizon m
keeps the event "still running after m rounds" as one aggregate outcome.
Divergences are reported as E-values exp((alpha - 1) * D_alpha), i.e. the
quantity sum_x P(x) * (P(x) / Q(x)) ** (alpha - 1), so a bound D_alpha <= B
reads E <= exp((alpha - 1) * B).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundViolation, ParameterError, PromiseViolation
from .noise import RandomStream, sample_bernoulli

_PROMISE_TOL = 1e-12


@dataclass(frozen=True)
class QueryPair:
    """One validated coin pair under the closeness promise at ``epsilon``."""

    p: float
    q: float
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not (0.0 <= self.q <= 1.0 and 0.0 <= self.p <= 1.0):
            raise PromiseViolation(f"probabilities must lie in [0, 1]: p={self.p}, q={self.q}")
        grow = math.exp(self.epsilon)
        if self.q > self.p + _PROMISE_TOL:
            raise PromiseViolation(f"q <= p fails: p={self.p}, q={self.q}")
        if self.p > grow * self.q + _PROMISE_TOL:
            raise PromiseViolation(f"p <= exp(eps) * q fails: p={self.p}, q={self.q}")
        if (1.0 - self.q) > grow * (1.0 - self.p) + _PROMISE_TOL:
            raise PromiseViolation(
                f"(1 - q) <= exp(eps) * (1 - p) fails: p={self.p}, q={self.q}"
            )
        if (1.0 - self.p) > grow * (1.0 - self.q) + _PROMISE_TOL:
            raise PromiseViolation(
                f"(1 - p) <= exp(eps) * (1 - q) fails: p={self.p}, q={self.q}"
            )


@dataclass(frozen=True)
class DeterministicAdversary:
    """A pre-committed schedule of query pairs, one per round."""

    pairs: tuple[QueryPair, ...]
    epsilon: float

    @classmethod
    def from_probabilities(
        cls, pairs: Iterable[tuple[float, float]], epsilon: float
    ) -> "DeterministicAdversary":
        validated = tuple(QueryPair(float(p), float(q), epsilon) for p, q in pairs)
        if not validated:
            raise ParameterError("schedule must contain at least one pair")
        return cls(validated, epsilon)

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class TranscriptDistribution:
    """Halting-time law of the single-success game truncated at a horizon.

    ``probabilities[i]`` is Pr[halt at round i + 1]; ``tail`` is the mass of
    runs still alive after the horizon.  The entries sum to one.
    """

    probabilities: np.ndarray
    tail: float


def run_coin_game(
    b: int,
    epsilon: float,
    k: int,
    pairs: Iterable[tuple[float, float] | QueryPair],
    stream: RandomStream,
) -> list[int]:
    """Play the game with hidden bit ``b`` until k ones or the schedule ends.

    Each incoming pair is validated against the promise before its coin is
    flipped; a violating pair aborts the game with PromiseViolation.
    """
    if b not in (0, 1):
        raise ParameterError(f"b must be 0 or 1, got {b}")
    if not (isinstance(k, int) and k >= 1):
        raise ParameterError(f"k must be a positive integer, got {k}")
    transcript: list[int] = []
    ones = 0
    for pair in pairs:
        if not isinstance(pair, QueryPair):
            pair = QueryPair(float(pair[0]), float(pair[1]), epsilon)
        chance = pair.p if b == 0 else pair.q
        outcome = sample_bernoulli(stream, chance)
        transcript.append(outcome)
        ones += outcome
        if ones == k:
            break
    return transcript


def _chances(adversary: DeterministicAdversary, b: int) -> np.ndarray:
    if b not in (0, 1):
        raise ParameterError(f"b must be 0 or 1, got {b}")
    attr = "p" if b == 0 else "q"
    return np.array([getattr(pair, attr) for pair in adversary.pairs])


def halting_distribution(
    adversary: DeterministicAdversary, b: int, horizon: int | None = None
) -> TranscriptDistribution:
    """Exact law of the halting round of the k = 1 game, truncated at horizon."""
    horizon = len(adversary) if horizon is None else horizon
    if not 1 <= horizon <= len(adversary):
        raise ParameterError(f"horizon must lie in [1, {len(adversary)}], got {horizon}")
    chance = _chances(adversary, b)[:horizon]
    alive = np.concatenate(([1.0], np.cumprod(1.0 - chance)))
    return TranscriptDistribution(alive[:-1] * chance, float(alive[-1]))


def _ratio_power_sum(
    probs_p: Sequence[float], probs_q: Sequence[float], alpha: float
) -> float:
    total = 0.0
    for mass_p, mass_q in zip(probs_p, probs_q):
        if mass_p == 0.0:
            continue
        if mass_q == 0.0:
            return math.inf
        total += mass_p * (mass_p / mass_q) ** (alpha - 1.0)
    return total


def exact_renyi(
    adversary: DeterministicAdversary, alpha: float, horizon: int | None = None
) -> float:
    """E-value of the order-alpha divergence of the truncated k = 1 game.

    Returns sum_i P_i (P_i / Q_i)^(alpha-1) plus the matching tail term,
    i.e. exp((alpha - 1) * D_alpha(P || Q)).  A zero-q outcome with positive
    p mass makes the divergence infinite and is reported as +inf.
    """
    if not alpha > 1:
        raise ParameterError(f"alpha must exceed 1, got {alpha}")
    dist_p = halting_distribution(adversary, 0, horizon)
    dist_q = halting_distribution(adversary, 1, horizon)
    return _ratio_power_sum(
        np.concatenate((dist_p.probabilities, [dist_p.tail])),
        np.concatenate((dist_q.probabilities, [dist_q.tail])),
        alpha,
    )


def exact_max_divergence(
    adversary: DeterministicAdversary, horizon: int | None = None
) -> float:
    """Max divergence ln sup_x P(x)/Q(x) of the truncated k = 1 game."""
    dist_p = halting_distribution(adversary, 0, horizon)
    dist_q = halting_distribution(adversary, 1, horizon)
    best = 0.0
    for mass_p, mass_q in zip(
        np.concatenate((dist_p.probabilities, [dist_p.tail])),
        np.concatenate((dist_q.probabilities, [dist_q.tail])),
    ):
        if mass_p == 0.0:
            continue
        if mass_q == 0.0:
            return math.inf
        best = max(best, mass_p / mass_q)
    return math.log(best) if best > 0 else 0.0


def bernoulli_renyi_check(p: float, q: float, epsilon: float, alpha: float) -> float:
    """E-value of one Bernoulli pair, certified against 1 + alpha(alpha-1)eps^2.

    Requires the two-sided closeness promise and alpha * epsilon <= 1/3, the
    regime where the quadratic bound is guaranteed.  Raises BoundViolation
    if the certified inequality somehow fails.
    """
    pair = QueryPair(p, q, epsilon)
    if not alpha > 1:
        raise ParameterError(f"alpha must exceed 1, got {alpha}")
    if alpha * epsilon > 1.0 / 3.0 + _PROMISE_TOL:
        raise ParameterError(
            f"alpha * epsilon must be at most 1/3, got {alpha * epsilon}"
        )
    value = _ratio_power_sum([pair.p, 1.0 - pair.p], [pair.q, 1.0 - pair.q], alpha)
    bound = 1.0 + alpha * (alpha - 1.0) * epsilon * epsilon
    if value > bound + 1e-12:
        raise BoundViolation(
            f"Bernoulli E-value {value} exceeded certified bound {bound}"
        )
    return value


def enumerate_transcripts(
    adversary: DeterministicAdversary, k: int, cap: int
) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities of every truncated k-success transcript under both bits.

    Walks all binary transcripts that either halt with k ones within ``cap``
    rounds or survive to the cap, treating each surviving prefix as its own
    outcome.  Returns aligned (P, Q) probability arrays; both sum to one.
    """
    if not (isinstance(k, int) and k >= 1):
        raise ParameterError(f"k must be a positive integer, got {k}")
    if not 1 <= cap <= len(adversary):
        raise ParameterError(f"cap must lie in [1, {len(adversary)}], got {cap}")
    ps = _chances(adversary, 0)
    qs = _chances(adversary, 1)
    probs_p: list[float] = []
    probs_q: list[float] = []
    # Depth-first walk over (round, ones, mass under P, mass under Q).
    stack = [(0, 0, 1.0, 1.0)]
    while stack:
        round_index, ones, mass_p, mass_q = stack.pop()
        if ones == k or round_index == cap:
            probs_p.append(mass_p)
            probs_q.append(mass_q)
            continue
        p, q = ps[round_index], qs[round_index]
        stack.append((round_index + 1, ones, mass_p * (1.0 - p), mass_q * (1.0 - q)))
        stack.append((round_index + 1, ones + 1, mass_p * p, mass_q * q))
    return np.array(probs_p), np.array(probs_q)


def transcript_renyi(
    adversary: DeterministicAdversary, k: int, alpha: float, cap: int
) -> float:
    """E-value of the order-alpha divergence over full truncated transcripts."""
    if not alpha > 1:
        raise ParameterError(f"alpha must exceed 1, got {alpha}")
    probs_p, probs_q = enumerate_transcripts(adversary, k, cap)
    return _ratio_power_sum(probs_p, probs_q, alpha)


def transcript_max_log_ratio(
    adversary: DeterministicAdversary, k: int, cap: int
) -> float:
    """Max divergence over full truncated transcripts of the k-success game."""
    probs_p, probs_q = enumerate_transcripts(adversary, k, cap)
    live = probs_p > 0
    if np.any(live & (probs_q == 0)):
        return math.inf
    ratios = probs_p[live] / probs_q[live]
    return float(np.log(ratios.max())) if ratios.size else 0.0


def random_valid_schedule(
    stream: RandomStream,
    length: int,
    epsilon: float,
    q_low: float = 0.05,
    q_high: float = 0.95,
) -> DeterministicAdversary:
    """Sample a schedule of promise-respecting pairs, uniform within bounds.

    Each round draws q in [q_low, q_high] and then p uniformly between q and
    the largest value both closeness inequalities allow.
    """
    if not (isinstance(length, int) and length >= 1):
        raise ParameterError(f"length must be a positive integer, got {length}")
    if not 0 < q_low <= q_high < 1:
        raise ParameterError("q bounds must satisfy 0 < q_low <= q_high < 1")
    generator = stream.generator
    grow = math.exp(epsilon)
    shrink = math.exp(-epsilon)
    pairs = []
    for _ in range(length):
        q = q_low + (q_high - q_low) * generator.random()
        p_cap = min(grow * q, 1.0 - (1.0 - q) * shrink)
        p = q + (p_cap - q) * generator.random()
        pairs.append((p, q))
    return DeterministicAdversary.from_probabilities(pairs, epsilon)
