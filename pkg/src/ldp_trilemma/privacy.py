"""Randomized response and the seeded shared-randomness stream."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ceil_log2


@dataclass(frozen=True)
class RRParams:
    """Constants of the 2^k-ary randomized response at privacy ``epsilon`` (nats)."""

    epsilon: float
    k: int

    def __post_init__(self):
        if self.epsilon < 0 or math.isnan(self.epsilon):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def alphabet(self) -> int:
        return 1 << self.k

    @property
    def keep_prob(self) -> float:
        # e^eps / (e^eps + 2^k - 1), written to survive large eps
        return 1.0 / (1.0 + (self.alphabet - 1) * math.exp(-self.epsilon))

    @property
    def other_prob(self) -> float:
        """Probability of each specific value other than the input."""
        return math.exp(-self.epsilon) * self.keep_prob

    @property
    def debias(self) -> float:
        return rr_debias(self)


def rr_debias(params: RRParams) -> float:
    """(e^eps + 2^k - 1) / (e^eps - 1)."""
    if params.epsilon == 0:
        raise ValueError("debias factor is undefined at epsilon = 0")
    return 1.0 + params.alphabet / math.expm1(params.epsilon)


def rr_transition_matrix(params: RRParams) -> np.ndarray:
    """Row-stochastic matrix ``Q[x, y] = P(output y | input x)``."""
    m = params.alphabet
    Q = np.full((m, m), params.other_prob)
    np.fill_diagonal(Q, params.keep_prob)
    return Q


def max_likelihood_ratio(Q: np.ndarray) -> float:
    """max over inputs x, x' and outputs y of Q[x, y] / Q[x', y]."""
    return float((Q.max(axis=0) / Q.min(axis=0)).max())


def rr_perturb(value, params: RRParams, rng: np.random.Generator):
    """Keep ``value`` w.p. keep_prob, else replace it uniformly by another value.

    ``value`` may be an int or an integer array of k-bit values.
    """
    scalar = np.isscalar(value)
    v = np.asarray(value, dtype=np.int64)
    m = params.alphabet
    if (v < 0).any() or (v >= m).any():
        raise ValueError(f"value out of range for {params.k}-bit randomized response")
    keep = rng.random(v.shape) < params.keep_prob
    other = rng.integers(0, m - 1, size=v.shape)
    other = other + (other >= v)
    out = np.where(keep, v, other)
    return int(out) if scalar else out


def binary_ldp(bit, epsilon: float, rng: np.random.Generator):
    """Binary randomized response: flip w.p. 1 / (e^eps + 1)."""
    return rr_perturb(bit, RRParams(epsilon, 1), rng)


def binary_debias(epsilon: float) -> float:
    """(e^eps + 1) / (e^eps - 1)."""
    return rr_debias(RRParams(epsilon, 1))


# --- shared randomness -------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def counter_uniform(seed: int, client_id, counter: int, range_: int):
    """Counter-based uniform integer in ``[0, range_)``.

    A pure function of ``(seed, client_id, counter)``: any party holding the
    seed reproduces the draw without replaying other clients' streams.
    """
    ids = np.asarray(client_id, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(np.full(ids.shape, np.uint64(seed & _MASK64)) ^ _splitmix64(ids))
        word = _splitmix64(key ^ _splitmix64(np.full(ids.shape, np.uint64(counter & _MASK64))))
    if range_ & (range_ - 1) == 0:
        bits = ceil_log2(range_)
        out = (word >> np.uint64(64 - bits)) if bits else np.zeros_like(word)
    else:
        # 53-bit float mapping; bias is below range_ / 2^53
        out = np.floor((word >> np.uint64(11)).astype(np.float64) * (range_ / 2.0**53))
    return out.astype(np.int64)


@dataclass
class SharedRandomness:
    """Per-client public-coin stream keyed by ``(seed, client_id)``.

    ``client_id`` may be an integer array; then every client in the batch
    advances in lockstep and each draw returns one value per client.
    ``bits_consumed`` is the per-client charge, ``ceil(log2 range)`` per draw.
    """

    seed: int
    client_id: object = 0
    counter: int = 0
    bits_consumed: int = 0

    def replay(self) -> "SharedRandomness":
        """Fresh copy positioned at the start of the same stream (server side)."""
        return SharedRandomness(self.seed, self.client_id)

    def draw(self, range_: int):
        return draw_uniform(self, range_)


def draw_uniform(shared: SharedRandomness, range_: int):
    if range_ < 1:
        raise ValueError("range must be >= 1")
    out = counter_uniform(shared.seed, shared.client_id, shared.counter, range_)
    shared.counter += 1
    shared.bits_consumed += ceil_log2(range_)
    return int(out) if np.ndim(shared.client_id) == 0 else out
