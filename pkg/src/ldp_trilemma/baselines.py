"""Subset Selection and the privatize-then-quantize separation baseline.

SS maps a symbol to a w-subset of [d] with probability proportional to
e^eps if the subset contains the symbol and 1 otherwise. The separation
baseline runs SS and then lets each client send only one group of 2^b
coordinates of its report, which costs a factor d / 2^b in sample size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rhr import FrequencyEstimate, check_symbols

# rows per sampling pass, bounds the (rows, d) key matrix
_CHUNK = 8192


@dataclass(frozen=True)
class SsParams:
    d: int
    epsilon: float

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("subset selection needs d >= 2")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    @property
    def w(self) -> int:
        return min(self.d, max(1, math.ceil(self.d / (math.exp(self.epsilon) + 1))))

    @property
    def include_prob(self) -> float:
        """P(x in subset) = e^eps C(d-1, w-1) / (e^eps C(d-1, w-1) + C(d-1, w)).

        Uses C(d-1, w) / C(d-1, w-1) = (d-w) / w.
        """
        e, d, w = math.exp(self.epsilon), self.d, self.w
        return e * w / (e * w + d - w)

    @property
    def other_prob(self) -> float:
        """P(j in subset) for a fixed j != x."""
        e, d, w = math.exp(self.epsilon), self.d, self.w
        return w * (e * (w - 1) + d - w) / ((d - 1) * (e * w + d - w))

    @property
    def scale(self) -> float:
        gap = self.include_prob - self.other_prob
        if gap <= 0:
            raise ValueError("estimator undefined: reports carry no information (epsilon = 0 or w = d)")
        return 1.0 / gap

    @property
    def offset(self) -> float:
        return self.other_prob * self.scale

    @property
    def report_bits(self) -> int:
        return self.d


@dataclass
class SsReport:
    """Batch of SS reports as an (n, d) boolean matrix, one row per client."""

    y: np.ndarray

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, dtype=bool))

    def __len__(self) -> int:
        return len(self.y)

    def to_bytes(self, i: int = 0) -> bytes:
        """d-bit bitmap of report ``i``, big-endian, zero-padded to a byte."""
        return np.packbits(self.y[i]).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, d: int) -> "SsReport":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if len(bits) < d or bits[d:].any():
            raise ValueError("malformed bitmap")
        return cls(bits[:d].astype(bool)[None, :])


def ss_encode(x, params: SsParams, rng: np.random.Generator) -> SsReport:
    """Two-stage sampler: include x with ``include_prob``, then fill the
    remaining w-1 (or w) slots uniformly without replacement from the other
    symbols. The fill is done by taking the smallest i.i.d. uniform keys,
    with x's key forced to the front or the back."""
    x = np.atleast_1d(check_symbols(x, params.d))
    n, d, w = len(x), params.d, params.w
    y = np.zeros((n, d), dtype=bool)
    for start in range(0, n, _CHUNK):
        xs = x[start : start + _CHUNK]
        rows = np.arange(len(xs))
        keys = rng.random((len(xs), d))
        include = rng.random(len(xs)) < params.include_prob
        keys[rows, xs] = np.where(include, -1.0, 2.0)
        chosen = np.argpartition(keys, w - 1, axis=1)[:, :w]
        y[start + rows[:, None], chosen] = True
    return SsReport(y)


def ss_decode(reports: SsReport | np.ndarray, params: SsParams, n: int | None = None) -> FrequencyEstimate:
    """p_hat_j = scale * T_j / n - offset, with T_j the count of reports containing j."""
    y = reports.y if isinstance(reports, SsReport) else np.atleast_2d(reports)
    n = len(y) if n is None else n
    if n < 1:
        raise ValueError("no reports")
    T = y.sum(axis=0, dtype=np.float64)
    p = params.scale * T / n - params.offset
    return FrequencyEstimate(p, p)


# --- separation baseline ----------------------------------------------------


@dataclass(frozen=True)
class SeparationParams:
    d: int
    epsilon: float
    bits: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("separation baseline needs d >= 2")
        if self.bits < 1:
            raise ValueError("separation baseline needs at least one bit")

    @property
    def group_size(self) -> int:
        return 1 << self.bits

    @property
    def d_pad(self) -> int:
        """d rounded up to a multiple of 2^b (and at least 2)."""
        g = self.group_size
        return max(2, -(-self.d // g) * g)

    @property
    def groups(self) -> int:
        return max(1, self.d_pad // self.group_size)

    @property
    def ss(self) -> SsParams:
        return SsParams(self.d_pad, self.epsilon)

    @property
    def report_bits(self) -> int:
        """Group bitmap only; the group id is positional and not charged."""
        return min(self.group_size, self.d_pad)


@dataclass
class GroupReport:
    """(group id, 2^b-bit bitmap) per client."""

    group: np.ndarray
    bitmap: np.ndarray

    def __len__(self) -> int:
        return len(self.group)

    def to_bytes(self, i: int = 0) -> bytes:
        gid = int(self.group[i])
        return gid.to_bytes(4, "little") + np.packbits(self.bitmap[i]).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, width: int) -> "GroupReport":
        bits = np.unpackbits(np.frombuffer(data[4:], dtype=np.uint8))
        if len(bits) < width or bits[width:].any():
            raise ValueError("malformed bitmap")
        return cls(np.array([int.from_bytes(data[:4], "little")]), bits[:width].astype(bool)[None, :])


def separation_encode(x, params: SeparationParams, rng: np.random.Generator) -> GroupReport:
    """Client i runs SS on the padded alphabet and keeps group ``i mod s``."""
    x = np.atleast_1d(check_symbols(x, params.d))
    y = ss_encode(x, params.ss, rng).y
    width = params.report_bits
    group = np.arange(len(x)) % params.groups
    cols = group[:, None] * width + np.arange(width)
    return GroupReport(group, y[np.arange(len(x))[:, None], cols])


def separation_decode(reports: GroupReport, params: SeparationParams) -> FrequencyEstimate:
    """Per-coordinate SS estimator with each group's own sample count."""
    s, width = params.groups, params.report_bits
    sizes = np.bincount(reports.group, minlength=s)
    if (sizes == 0).any():
        raise ValueError(f"empty client group; need at least s = {s} clients")
    cols = reports.group[:, None] * width + np.arange(width)
    T = np.bincount(cols.ravel(), weights=reports.bitmap.ravel().astype(np.float64), minlength=s * width)
    n_eff = np.repeat(sizes, width)
    ss = params.ss
    raw = ss.scale * T / n_eff - ss.offset
    return FrequencyEstimate(raw[: params.d], raw)


def separation_distribution(x, params: SeparationParams, rng: np.random.Generator) -> FrequencyEstimate:
    return separation_decode(separation_encode(x, params, rng), params)
