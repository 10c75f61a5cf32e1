"""Simulated uplink that measures and enforces the per-client bit budget."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BudgetViolation(RuntimeError):
    """A client tried to send more bits than its budget allows."""


def bit_length(values) -> np.ndarray:
    """Bits needed to write each non-negative integer (0 for 0)."""
    v = np.asarray(values, dtype=np.int64)
    if (v < 0).any():
        raise ValueError("negative payload value")
    if (v >= 1 << 53).any():
        raise ValueError("payload value too large")
    # v = f * 2**e with f in [0.5, 1), exact below 2**53
    return np.frexp(v.astype(np.float64))[1].astype(np.int64)


@dataclass
class Channel:
    """Counts what every client sends and rejects anything above ``budget``.

    ``declared`` is the fixed wire width the scheme claims; the measured
    width of a value is the larger of ``declared`` and its actual bit length,
    so an encoder that overflows its field is caught.
    """

    budget: int
    sent: list = field(default_factory=list)

    def transmit(self, values, declared: int, extra_bits: int = 0) -> np.ndarray:
        measured = np.maximum(bit_length(values), declared) + extra_bits
        worst = int(measured.max(initial=0))
        if worst > self.budget:
            raise BudgetViolation(f"client payload of {worst} bits exceeds the budget of {self.budget}")
        self.sent.append(measured)
        return measured

    def transmit_bitmaps(self, bitmaps) -> np.ndarray:
        """Fixed-width bitmaps cost their width."""
        bitmaps = np.atleast_2d(bitmaps)
        measured = np.full(len(bitmaps), bitmaps.shape[1], dtype=np.int64)
        if bitmaps.shape[1] > self.budget:
            raise BudgetViolation(f"bitmap of {bitmaps.shape[1]} bits exceeds the budget of {self.budget}")
        self.sent.append(measured)
        return measured

    @property
    def max_bits(self) -> int:
        return max((int(m.max(initial=0)) for m in self.sent), default=0)
