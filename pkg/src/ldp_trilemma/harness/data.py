"""Synthetic workloads: non-central unit vectors and categorical sources."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


def gen_mean_data(d: int, n: int, seed=None) -> np.ndarray:
    """n unit vectors: the first n//2 from N(1, I_d), the rest from N(10, I_d),
    each normalised to the sphere. Odd n puts the extra client in the
    second half."""
    if d < 1 or n < 1:
        raise ValueError("d and n must be positive")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d))
    Z[: n // 2] += 1.0
    Z[n // 2 :] += 10.0
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


@dataclass(frozen=True)
class AtomSource:
    """Finite distribution over unit vectors (uniform weights), so that the
    population mean is known exactly."""

    atoms: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.atoms.mean(axis=0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.atoms[rng.integers(len(self.atoms), size=n)]


def gen_atom_source(d: int, atoms: int = 16, seed=None) -> AtomSource:
    """Atoms drawn with the same two-cluster recipe as :func:`gen_mean_data`."""
    return AtomSource(gen_mean_data(d, atoms, seed))


@dataclass(frozen=True)
class CategoricalSource:
    kind: str
    param: float | str | None = None

    @classmethod
    def parse(cls, spec: str) -> "CategoricalSource":
        """``uniform``, ``geometric:0.8`` or ``file:path``."""
        kind, _, arg = spec.partition(":")
        if kind == "uniform":
            return cls("uniform")
        if kind == "geometric":
            lam = float(arg) if arg else 0.8
            if not 0 <= lam:
                raise ValueError("geometric parameter must be >= 0")
            return cls("geometric", lam)
        if kind == "file":
            if not arg:
                raise ValueError("file source needs a path")
            return cls("file", arg)
        raise ValueError(f"unknown source {spec!r}")

    def probabilities(self, d: int) -> np.ndarray:
        if self.kind == "uniform":
            return np.full(d, 1.0 / d)
        if self.kind == "geometric":
            p = self.param ** np.arange(d, dtype=np.float64)  # 0**0 == 1 gives the point mass
            return p / p.sum()
        raise ValueError("a file source has no generating distribution")


def geometric_probabilities(d: int, lam: float) -> np.ndarray:
    return CategoricalSource("geometric", lam).probabilities(d)


def load_symbols(path, d: int) -> np.ndarray:
    """Whitespace or comma separated integers, 0-based."""
    text = Path(path).read_text().replace(",", " ").split()
    x = np.array([int(t) for t in text], dtype=np.int64)
    if x.size == 0:
        raise ValueError(f"{path}: no symbols")
    if (x < 0).any() or (x >= d).any():
        raise ValueError(f"{path}: symbol outside [0, {d})")
    return x


def gen_categorical_data(d: int, n: int, source="geometric:0.8", seed=None) -> np.ndarray:
    """n symbols in [0, d). A file source returns its symbols verbatim and
    ignores ``n`` and ``seed``."""
    src = CategoricalSource.parse(source) if isinstance(source, str) else source
    if src.kind == "file":
        return load_symbols(src.param, d)
    if d < 1 or n < 1:
        raise ValueError("d and n must be positive")
    rng = np.random.default_rng(seed)
    return rng.choice(d, size=n, p=src.probabilities(d))
