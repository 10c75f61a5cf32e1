"""Subsampled and quantized Kashin's response for mean estimation.

Three variants share one pipeline (Kashin expansion, one-bit stochastic
quantisation, k coordinates, 2^k-ary randomized response):

* ``public_coin``: the k coordinates are drawn from the shared stream and
  never transmitted.
* ``private_coin``: the coordinates come from a client-private stream and
  ride along in the message.
* ``statistical_grouping``: client ``i`` always reports the fixed coordinate
  block ``i mod m``; no randomness is shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BitPayload, ceil_log2
from .frames import DEFAULT_LEVEL, TightFrame, kashin_decompose, synthesize
from .privacy import RRParams, SharedRandomness, rr_perturb

MODES = ("public_coin", "private_coin", "statistical_grouping")
_MODE_TAGS = {m: i for i, m in enumerate(MODES)}

NORM_SLACK = 1e-9


@dataclass(frozen=True)
class SqkrParams:
    epsilon: float
    bits: int
    frame: TightFrame
    mode: str = "public_coin"
    level: float = DEFAULT_LEVEL
    n: int | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("SQKR needs epsilon > 0")
        if self.bits < 1:
            raise ValueError("SQKR needs at least one bit")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def d(self) -> int:
        return self.frame.d

    @property
    def N(self) -> int:
        return self.frame.N

    @property
    def k(self) -> int:
        """Sampled coordinates per client: min(ceil(eps), b)."""
        return min(math.ceil(self.epsilon), self.bits)

    @property
    def b_star(self) -> int:
        """Block size in grouping mode: min(ceil(eps * log2 e), b)."""
        return min(math.ceil(self.epsilon * math.log2(math.e)), self.bits)

    @property
    def groups(self) -> int:
        """Number of coordinate blocks m = ceil(N / b*) in grouping mode."""
        return -(-self.N // self.b_star)

    @property
    def message_bits(self) -> int:
        return self.b_star if self.mode == "statistical_grouping" else self.k

    @property
    def rr(self) -> RRParams:
        return RRParams(self.epsilon, self.message_bits)

    @property
    def bound(self) -> float:
        """Quantiser range c / sqrt(d) = level / sqrt(N) for |x| <= 1."""
        return self.level / math.sqrt(self.N)

    @property
    def index_bits(self) -> int:
        return ceil_log2(self.N)

    @property
    def payload_bits(self) -> int:
        extra = self.k * self.index_bits if self.mode == "private_coin" else 0
        return self.message_bits + extra

    @property
    def budget(self) -> int:
        """Per-client bit budget the channel enforces for this mode."""
        if self.mode == "private_coin":
            return self.bits * (self.index_bits + 1)
        return self.bits

    @property
    def shared_bits(self) -> int:
        """Public-coin bits one client consumes."""
        return self.k * self.index_bits if self.mode == "public_coin" else 0


@dataclass(frozen=True)
class SqkrMessage:
    """One client's report and its wire form.

    Wire layout: mode tag byte, k byte, the k payload bits packed
    big-endian and zero-padded to a byte, then (private coin only) k indices
    as little-endian integers of ceil(index_bits / 8) bytes each.
    """

    mode: str
    k: int
    value: int
    indices: tuple[int, ...] | None = None

    def to_bytes(self, index_bits: int = 0) -> bytes:
        out = bytes([_MODE_TAGS[self.mode], self.k]) + BitPayload(self.value, self.k).packed()
        if self.mode == "private_coin":
            width = (index_bits + 7) // 8
            for s in self.indices:
                if s >> index_bits:
                    raise ValueError("index does not fit the declared width")
                out += int(s).to_bytes(width, "little")
        return out

    @classmethod
    def from_bytes(cls, data: bytes, index_bits: int = 0) -> "SqkrMessage":
        mode, k = MODES[data[0]], data[1]
        nbytes = (k + 7) // 8
        value = BitPayload.unpacked(data[2 : 2 + nbytes], k).value
        indices = None
        if mode == "private_coin":
            width = (index_bits + 7) // 8
            body = data[2 + nbytes :]
            if len(body) != width * k:
                raise ValueError("index section has the wrong length")
            indices = tuple(int.from_bytes(body[i * width : (i + 1) * width], "little") for i in range(k))
        return cls(mode, k, value, indices)


@dataclass
class SqkrBatch:
    """Reports from a batch of clients, column-stored for vectorised decoding."""

    mode: str
    k: int
    values: np.ndarray
    client_ids: np.ndarray
    indices: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i) -> SqkrMessage:
        idx = None if self.indices is None else tuple(int(s) for s in self.indices[i])
        return SqkrMessage(self.mode, self.k, int(self.values[i]), idx)

    @classmethod
    def from_messages(cls, messages, client_ids) -> "SqkrBatch":
        messages = list(messages)
        mode, k = messages[0].mode, messages[0].k
        indices = None
        if mode == "private_coin":
            indices = np.array([m.indices for m in messages], dtype=np.int64)
        return cls(mode, k, np.array([m.value for m in messages], dtype=np.int64),
                   np.asarray(client_ids), indices)


def check_unit_ball(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(np.atleast_2d(X), axis=1)
    if (norms > 1 + NORM_SLACK).any():
        raise ValueError(f"input norm {norms.max():.12g} exceeds 1")
    return X


def sqkr_quantize(a: np.ndarray, bound: float, rng: np.random.Generator) -> np.ndarray:
    """Unbiased one-bit quantiser onto {-bound, +bound}: P(+) = (a + bound) / (2 bound)."""
    a = np.asarray(a, dtype=np.float64)
    if (np.abs(a) > bound * (1 + 1e-12)).any():
        raise ValueError("coefficient exceeds the quantiser range")
    p_plus = np.clip((a + bound) / (2 * bound), 0.0, 1.0)
    return np.where(rng.random(a.shape) < p_plus, bound, -bound)


def _pack_signs(positive: np.ndarray) -> np.ndarray:
    """(n, k) booleans -> k-bit integers, first column in the top bit."""
    k = positive.shape[1]
    weights = 1 << np.arange(k - 1, -1, -1, dtype=np.int64)
    return positive.astype(np.int64) @ weights


def _unpack_signs(values: np.ndarray, k: int) -> np.ndarray:
    """k-bit integers -> (n, k) array of +-1."""
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    bits = (np.asarray(values, dtype=np.int64)[:, None] >> shifts) & 1
    return 2.0 * bits - 1.0


def _coefficients(X: np.ndarray, params: SqkrParams) -> np.ndarray:
    coeffs = kashin_decompose(params.frame, X, level=params.level)
    if np.max(coeffs.level) > params.level:
        # a restart pushed the level past the quantiser range
        raise ValueError("Kashin decomposition exceeded the configured level; rebuild the frame")
    return coeffs.a


def sqkr_encode(X, params: SqkrParams, shared: SharedRandomness, rng: np.random.Generator) -> SqkrBatch:
    """Encode one client (x of shape (d,)) or a batch (n, d).

    ``shared`` supplies the k coordinate draws; its ``client_id`` must match
    the batch. In private-coin mode pass the client's own stream: the drawn
    indices are then written into the messages.
    """
    if params.mode == "statistical_grouping":
        raise ValueError("use sqkr_group_encode for the grouping variant")
    X = np.atleast_2d(check_unit_ball(X))
    n = X.shape[0]
    if np.size(shared.client_id) != n and np.ndim(shared.client_id) != 0:
        raise ValueError("stream client ids do not match the batch")
    q = sqkr_quantize(_coefficients(X, params), params.bound, rng)
    idx = np.column_stack([np.broadcast_to(shared.draw(params.N), (n,)) for _ in range(params.k)])
    positive = q[np.arange(n)[:, None], idx] > 0
    values = rr_perturb(_pack_signs(positive), params.rr, rng)
    ids = np.broadcast_to(np.asarray(shared.client_id), (n,)).copy()
    indices = idx if params.mode == "private_coin" else None
    return SqkrBatch(params.mode, params.k, values, ids, indices)


def sqkr_coefficient_sum(values, indices, params: SqkrParams) -> np.ndarray:
    """Sum over clients of the debiased coefficient estimates a-hat (length N).

    ``a_hat_j = (N / k) * debias * sum_m q~_m [j == s_m]`` per client; the
    sum is associative so batches may be reduced in any order.
    """
    values = np.asarray(values, dtype=np.int64).ravel()
    indices = np.asarray(indices, dtype=np.int64).reshape(len(values), params.k)
    if (indices < 0).any() or (indices >= params.N).any():
        raise ValueError("sampled index outside [0, N)")
    signs = _unpack_signs(values, params.k)
    acc = np.bincount(indices.ravel(), weights=signs.ravel(), minlength=params.N)
    return acc * (params.N / params.k) * params.rr.debias * params.bound


def sqkr_decode(messages: SqkrBatch, params: SqkrParams, shared: SharedRandomness | None = None) -> np.ndarray:
    """Average of the per-client unbiased estimates.

    Public coin: ``shared`` is the server's copy of the clients' streams,
    positioned at the start. Private coin: indices are read from the messages.
    """
    n = len(messages)
    if n == 0:
        raise ValueError("no messages")
    if messages.k != params.k or messages.mode != params.mode:
        raise ValueError("messages do not match the parameters")
    if params.mode == "private_coin":
        if messages.indices is None or messages.indices.shape != (n, params.k):
            raise ValueError("stream desync: private-coin indices missing or malformed")
        indices = messages.indices
    else:
        if shared is None:
            raise ValueError("public-coin decoding needs the shared stream")
        indices = np.column_stack([np.broadcast_to(shared.draw(params.N), (n,)) for _ in range(params.k)])
    return synthesize(params.frame, sqkr_coefficient_sum(messages.values, indices, params)) / n


# --- deterministic grouping (i.i.d. clients, no shared randomness) ---------


def _group_layout(n: int, params: SqkrParams) -> tuple[int, int]:
    m = params.groups
    n_eff = (n // m) * m
    if n_eff == 0:
        raise ValueError(f"need at least {m} clients so every coordinate block is covered")
    return m, n_eff


def sqkr_group_encode(X, params: SqkrParams, rng: np.random.Generator) -> SqkrBatch:
    """Client i quantises block ``i mod m`` of its coefficients (b* bits).

    Clients beyond the largest multiple of m are dropped so every block gets
    the same number of reports.
    """
    X = np.atleast_2d(check_unit_ball(X))
    m, n_eff = _group_layout(X.shape[0], params)
    X = X[:n_eff]
    bs = params.b_star
    a = np.zeros((n_eff, m * bs))
    a[:, : params.N] = _coefficients(X, params)
    ids = np.arange(n_eff)
    cols = (ids % m)[:, None] * bs + np.arange(bs)
    q = sqkr_quantize(a[ids[:, None], cols], params.bound, rng)
    values = rr_perturb(_pack_signs(q > 0), params.rr, rng)
    return SqkrBatch("statistical_grouping", bs, values, ids)


def sqkr_group_decode(messages: SqkrBatch, params: SqkrParams) -> np.ndarray:
    m, n_eff = _group_layout(len(messages), params)
    if len(messages) != n_eff:
        raise ValueError("grouping decode expects a whole number of client groups")
    bs = params.b_star
    group = np.asarray(messages.client_ids) % m
    cols = group[:, None] * bs + np.arange(bs)
    signs = _unpack_signs(messages.values, bs)
    acc = np.bincount(cols.ravel(), weights=signs.ravel(), minlength=m * bs)
    A_hat = acc * params.rr.debias * params.bound / (n_eff // m)
    return synthesize(params.frame, A_hat[: params.N])


def sqkr_statistical(X, params: SqkrParams, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Estimate of the population mean; returns ``(estimate, effective_n)``."""
    msgs = sqkr_group_encode(X, params, rng)
    return sqkr_group_decode(msgs, params), len(msgs)
