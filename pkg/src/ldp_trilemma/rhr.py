"""Recursive Hadamard response.

Frequency estimation (public coin), distribution estimation (positional
grouping, no shared randomness) and the multi-sample heavy-hitter scheme
with an l-infinity guarantee.

The identity everything rests on: for B = D / 2^(k-1),
``H_D[m*B + r, l*B + c] = H_{2^(k-1)}[m, l] * H_B[r, c]``. A client holding
symbol ``x = l*B + c`` and row ``r`` therefore knows all 2^(k-1) entries
``H_D[m*B + r, x]`` from one sign ``H_B[r, c]`` and the block index ``l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BitPayload, ceil_log2, fwht, hadamard_entry, pack_value, unpack_value
from .privacy import RRParams, SharedRandomness, binary_debias, rr_perturb


@dataclass(frozen=True)
class RhrParams:
    d_raw: int
    epsilon: float
    bits: int

    def __post_init__(self):
        if self.d_raw < 2:
            raise ValueError("alphabet must have at least two symbols")
        if self.epsilon <= 0:
            raise ValueError("RHR needs epsilon > 0")
        if self.bits < 1:
            raise ValueError("RHR needs at least one bit")

    @property
    def D(self) -> int:
        return 1 << ceil_log2(self.d_raw)

    @property
    def k(self) -> int:
        """min(b, ceil(eps * log2 e), log2 D)."""
        return min(self.bits, math.ceil(self.epsilon * math.log2(math.e)), ceil_log2(self.D))

    @property
    def blocks(self) -> int:
        """2^(k-1): entries of H_D conveyed per message."""
        return 1 << (self.k - 1)

    @property
    def B(self) -> int:
        return self.D // self.blocks

    @property
    def rr(self) -> RRParams:
        return RRParams(self.epsilon, self.k)

    @property
    def shared_bits(self) -> int:
        return ceil_log2(self.B)


@dataclass(frozen=True)
class RhrMessage:
    """A k-bit (sign, loc) report. ``r`` is known to the server from the
    shared stream or the client position and is not part of the wire form,
    which is one byte of k followed by the packed payload."""

    k: int
    value: int
    r: int | None = None

    @property
    def payload(self) -> BitPayload:
        return BitPayload(self.value, self.k)

    def to_bytes(self) -> bytes:
        return bytes([self.k]) + self.payload.packed()

    @classmethod
    def from_bytes(cls, data: bytes, r: int | None = None) -> "RhrMessage":
        k = data[0]
        return cls(k, BitPayload.unpacked(data[1:], k).value, r)


@dataclass
class RhrBatch:
    k: int
    values: np.ndarray
    r: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i) -> RhrMessage:
        return RhrMessage(self.k, int(self.values[i]), int(self.r[i]))


@dataclass
class FrequencyEstimate:
    values: np.ndarray
    raw_padded: np.ndarray

    def clipped(self) -> np.ndarray:
        """Projection onto the simplex by clip-and-renormalise; display only,
        the result is no longer unbiased."""
        v = np.clip(self.values, 0.0, None)
        s = v.sum()
        return v / s if s > 0 else np.full_like(v, 1.0 / len(v))


def check_symbols(x, d: int) -> np.ndarray:
    x = np.asarray(x)
    if x.size and not np.issubdtype(x.dtype, np.integer):
        if not np.all(np.mod(x, 1) == 0):
            raise ValueError("symbols must be integers")
        x = x.astype(np.int64)
    x = x.astype(np.int64, copy=False)
    if (x < 0).any() or (x >= d).any():
        raise ValueError(f"symbol outside [0, {d})")
    return x


def rhr_encode(x, r, params: RhrParams, rng: np.random.Generator):
    """Encode symbol(s) ``x`` against Hadamard row group(s) ``r``.

    loc = x // B, sign = H_D[r, x] (= H_B[r, x mod B]); the packed k-bit
    value then goes through 2^k-ary randomized response. Scalars give an
    :class:`RhrMessage`, arrays an :class:`RhrBatch`.
    """
    scalar = np.isscalar(x) and np.isscalar(r)
    x = np.atleast_1d(check_symbols(x, params.d_raw))
    r = np.broadcast_to(np.asarray(r, dtype=np.int64), x.shape)
    if (r < 0).any() or (r >= params.B).any():
        raise ValueError(f"row group outside [0, {params.B})")
    loc = x // params.B
    sign = hadamard_entry(r, x, params.D)
    value = pack_value((sign > 0).astype(np.int64), loc, params.k)
    value = rr_perturb(value, params.rr, rng)
    if scalar:
        return RhrMessage(params.k, int(value[0]), int(r[0]))
    return RhrBatch(params.k, value, r.copy())


def _signed_histogram(values, r, params: RhrParams) -> np.ndarray:
    """S[r, l] = sum of debiased signs over messages with row r and loc l."""
    sign_bit, loc = unpack_value(np.asarray(values, dtype=np.int64), params.k)
    signs = 2.0 * sign_bit - 1.0
    flat = np.asarray(r, dtype=np.int64) * params.blocks + loc
    S = np.bincount(flat, weights=signs, minlength=params.B * params.blocks)
    return S.reshape(params.B, params.blocks) * params.rr.debias


def _hadamard_domain(S: np.ndarray, weights: np.ndarray, params: RhrParams) -> np.ndarray:
    """E[m*B + r] = weights[r] * (H_{2^(k-1)} S[r])[m], the estimate of H_D p."""
    T = fwht(S, axis=1) * weights[:, None]
    return T.T.reshape(params.D)


def rhr_decode_frequency(messages: RhrBatch, params: RhrParams, n: int | None = None) -> FrequencyEstimate:
    """Unbiased estimate of the empirical frequency of the clients' symbols.

    Uses the global 1/n weighting (group sizes are random under public coin).
    """
    n = len(messages) if n is None else n
    if n < 1:
        raise ValueError("no messages")
    if messages.k != params.k:
        raise ValueError("message width does not match the parameters")
    S = _signed_histogram(messages.values, messages.r, params)
    E = _hadamard_domain(S, np.full(params.B, 1.0 / (n * params.blocks)), params)
    raw = fwht(E)
    return FrequencyEstimate(raw[: params.d_raw], raw)


def rhr_frequency(x, params: RhrParams, shared: SharedRandomness, rng: np.random.Generator) -> tuple[RhrBatch, FrequencyEstimate]:
    """Client side and server side of public-coin RHR in one call."""
    x = np.atleast_1d(check_symbols(x, params.d_raw))
    r = shared.draw(params.B)
    msgs = rhr_encode(x, np.broadcast_to(r, x.shape), params, rng)
    return msgs, rhr_decode_frequency(msgs, params)


def replay_groups(shared: SharedRandomness, params: RhrParams) -> np.ndarray:
    """Server side re-derivation of each client's row group."""
    return np.atleast_1d(shared.draw(params.B))


# --- distribution estimation (i.i.d. clients, positional groups) -----------


def rhr_distribution_encode(x, params: RhrParams, rng: np.random.Generator, offset: int = 0) -> RhrBatch:
    """Client ``i`` (0-based, counted from ``offset``) uses row group ``i mod B``."""
    x = np.atleast_1d(check_symbols(x, params.d_raw))
    r = (np.arange(len(x)) + offset) % params.B
    return rhr_encode(x, r, params, rng)


def rhr_distribution_decode(messages: RhrBatch, params: RhrParams) -> FrequencyEstimate:
    """Per-group normalisation by |G_j|, then the outer transform with 1/D."""
    sizes = np.bincount(messages.r, minlength=params.B)
    if (sizes == 0).any():
        raise ValueError(f"empty client group; need at least B = {params.B} clients")
    S = _signed_histogram(messages.values, messages.r, params)
    q_hat = _hadamard_domain(S, 1.0 / sizes, params)
    raw = fwht(q_hat) / params.D
    return FrequencyEstimate(raw[: params.d_raw], raw)


def rhr_distribution(x, params: RhrParams, rng: np.random.Generator) -> FrequencyEstimate:
    if len(np.atleast_1d(x)) < params.B:
        raise ValueError(f"need at least B = {params.B} clients")
    return rhr_distribution_decode(rhr_distribution_encode(x, params, rng), params)


# --- heavy hitters ----------------------------------------------------------


@dataclass(frozen=True)
class HeavyHitterParams:
    d_raw: int
    epsilon: float
    bits: int

    def __post_init__(self):
        if self.d_raw < 1:
            raise ValueError("alphabet must be non-empty")
        if self.epsilon <= 0:
            raise ValueError("heavy hitter estimation needs epsilon > 0")
        if self.bits < 1:
            raise ValueError("heavy hitter estimation needs at least one bit")

    @property
    def D(self) -> int:
        return 1 << ceil_log2(self.d_raw)

    @property
    def k(self) -> int:
        """min(b, ceil(eps)) one-bit samples per client."""
        return min(self.bits, math.ceil(self.epsilon))

    @property
    def epsilon_per_bit(self) -> float:
        return self.epsilon / self.k

    @property
    def debias(self) -> float:
        return binary_debias(self.epsilon_per_bit)

    @property
    def subgaussian_norm(self) -> float:
        """Bound 2 (e^eps' + 1) / (e^eps' - 1) on each single-sample estimate."""
        return 2.0 * self.debias

    @property
    def shared_bits(self) -> int:
        return self.k * ceil_log2(self.D)


@dataclass
class HeavyHitterBatch:
    bits: np.ndarray  # (n, k) perturbed bits, 1 for +1
    columns: np.ndarray  # (n, k) sampled Hadamard columns

    def __len__(self) -> int:
        return len(self.bits)


def heavy_hitter_encode(x, params: HeavyHitterParams, shared: SharedRandomness, rng: np.random.Generator) -> HeavyHitterBatch:
    """k shared column draws per client; each bit H_D[x, r] passes a binary
    eps/k randomized response."""
    x = np.atleast_1d(check_symbols(x, params.d_raw))
    n = len(x)
    cols = np.column_stack([np.broadcast_to(shared.draw(params.D), (n,)) for _ in range(params.k)])
    true_bits = (hadamard_entry(x[:, None], cols, params.D) > 0).astype(np.int64)
    noisy = rr_perturb(true_bits, RRParams(params.epsilon_per_bit, 1), rng)
    return HeavyHitterBatch(noisy, cols)


def heavy_hitter_decode(messages: HeavyHitterBatch, params: HeavyHitterParams, n: int | None = None) -> FrequencyEstimate:
    """D_hat(j) = debias / (n k) * sum_i sum_l H_D[j, r_il] * bit~_il, computed
    as one FWHT of the column-indexed signed histogram."""
    n = len(messages) if n is None else n
    if n < 1:
        raise ValueError("no messages")
    signs = 2.0 * np.asarray(messages.bits, dtype=np.float64) - 1.0
    Z = np.bincount(np.asarray(messages.columns).ravel(), weights=signs.ravel(), minlength=params.D)
    raw = fwht(Z) * params.debias / (n * params.k)
    return FrequencyEstimate(raw[: params.d_raw], raw)


def heavy_hitter_estimate(x, params: HeavyHitterParams, shared: SharedRandomness, rng: np.random.Generator) -> FrequencyEstimate:
    msgs = heavy_hitter_encode(x, params, shared, rng)
    return heavy_hitter_decode(msgs, params)
