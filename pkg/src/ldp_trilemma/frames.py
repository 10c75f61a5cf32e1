"""Randomised partial-Hadamard tight frames and Kashin representations.

The frame is the d x N matrix ``A`` made of ``d`` rows of
``H_N @ diag(signs) / sqrt(N)``. Its rows are orthonormal, so ``A @ A.T = I_d``
and the columns form a Parseval frame of R^d. Both directions are applied
through the FWHT, never as a dense matrix.

Rows are a seeded random subset by default. Taking the first ``d`` rows is
available (``rows="first"``) but gives a poor frame: for d a power of two
those rows are ``[H_d, H_d]``, and some unit vectors then admit no
representation below level 4 at all.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import ceil_log2, fwht

logger = logging.getLogger(__name__)

DEFAULT_LEVEL = 4.0
# rows per pass; keeps the working set cache-resident for large batches
_CHUNK = 1024


@dataclass(frozen=True)
class TightFrame:
    d: int
    N: int
    diag_signs: np.ndarray
    row_selection: np.ndarray
    seed: int | None = None

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.N)

    def matrix(self) -> np.ndarray:
        """Dense ``A`` (for tests and small d)."""
        return synthesize(self, np.eye(self.N)).T


def frame_size(d: int) -> int:
    """N = 2^(ceil(log2 d) + 1)."""
    return 1 << (ceil_log2(d) + 1)


def build_frame(d: int, seed=None, rows: str = "random") -> TightFrame:
    """Frame for R^d, reproducible from ``(d, seed, rows)``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if rows not in ("random", "first"):
        raise ValueError(f"unknown row convention {rows!r}")
    N = frame_size(d)
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=N)
    if rows == "random":
        selection = np.sort(rng.choice(N, size=d, replace=False))
    else:
        selection = np.arange(d)
    signs.setflags(write=False)
    selection.setflags(write=False)
    return TightFrame(d, N, signs, selection, seed if isinstance(seed, int) else None)


def analyze(frame: TightFrame, x: np.ndarray) -> np.ndarray:
    """Frame coefficients ``A.T @ x``; accepts a (d,) vector or an (n, d) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != frame.d:
        raise ValueError(f"expected last dimension {frame.d}, got {x.shape[-1]}")
    padded = np.zeros(x.shape[:-1] + (frame.N,))
    padded[..., frame.row_selection] = x
    # H is symmetric, so A.T x = D H S.T x / sqrt(N)
    return fwht(padded) * frame.diag_signs * frame.scale


def synthesize(frame: TightFrame, a: np.ndarray) -> np.ndarray:
    """``A @ a`` for an (N,) vector or an (n, N) batch."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != frame.N:
        raise ValueError(f"expected last dimension {frame.N}, got {a.shape[-1]}")
    return fwht(a * frame.diag_signs)[..., frame.row_selection] * frame.scale


@dataclass
class KashinCoefficients:
    """Result of :func:`kashin_decompose`; arrays carry a leading batch axis
    when the input was a batch."""

    a: np.ndarray
    level_bound: np.ndarray | float
    residual_norm: np.ndarray | float
    level: np.ndarray | float
    restarts: np.ndarray | int = 0


class KashinConvergenceError(RuntimeError):
    """Residual failed to shrink even after the allowed restarts; the frame
    draw is probably bad and should be rebuilt with another seed."""


def _clip_and_correct(frame, x, norms, level, tol, gamma, rho, max_iter):
    """One attempt at a fixed level for a batch; returns (a, residual, ok)."""
    n = x.shape[0]
    a = np.zeros((n, frame.N))
    r = x.copy()
    bound = level * norms / np.sqrt(frame.N)
    rnorm = np.linalg.norm(r, axis=1)
    target = tol * norms
    active = rnorm > target
    ok = np.ones(n, dtype=bool)
    clip = (1.0 - gamma) * bound
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        b = analyze(frame, r[idx])
        m = clip[idx, None]
        cb = np.clip(b, -m, m)
        a[idx] += cb
        r_new = r[idx] - synthesize(frame, cb)
        new_norm = np.linalg.norm(r_new, axis=1)
        stalled = new_norm > rho * rnorm[idx]
        ok[idx[stalled]] = False
        r[idx] = r_new
        rnorm[idx] = new_norm
        active[idx] = ~stalled & (new_norm > target[idx])
        clip = clip * gamma
    ok &= rnorm <= target
    # fold what is left into a without breaking the level bound
    a = np.clip(a + analyze(frame, r), -bound[:, None], bound[:, None])
    residual = np.linalg.norm(x - synthesize(frame, a), axis=1)
    return a, residual, ok & (residual <= target)


def kashin_decompose(
    frame: TightFrame,
    x: np.ndarray,
    level: float = DEFAULT_LEVEL,
    tol: float = 1e-10,
    gamma: float = 0.5,
    rho: float = 0.9,
    max_restarts: int = 4,
    max_iter: int = 200,
) -> KashinCoefficients:
    """Kashin representation of ``x`` (or of each row of a batch) at ``level``.

    Iterative clip-and-correct: at step t the analysis coefficients of the
    residual are clipped to ``(1 - gamma) * gamma**(t-1) * level * |x| / sqrt(N)``
    and the clipped part is subtracted in frame space. The clip budgets sum to
    at most ``level * |x| / sqrt(N)``, so the level bound holds by construction.
    A row whose residual does not shrink by ``rho`` per step restarts at twice
    the level, up to ``max_restarts`` times.

    Requires ``|x| <= 1``, ``level > 1`` and ``0 < tol < 1``.
    """
    if level <= 1:
        raise ValueError("level must exceed 1")
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != frame.d:
        raise ValueError(f"expected dimension {frame.d}, got {X.shape[1]}")
    norms = np.linalg.norm(X, axis=1)
    if (norms > 1 + 1e-9).any():
        raise ValueError("input norm exceeds 1")

    n = X.shape[0]
    if n > _CHUNK:
        parts = [
            kashin_decompose(frame, X[i : i + _CHUNK], level, tol, gamma, rho, max_restarts, max_iter)
            for i in range(0, n, _CHUNK)
        ]
        return KashinCoefficients(*(np.concatenate([getattr(p, f) for p in parts])
                                    for f in ("a", "level_bound", "residual_norm", "level", "restarts")))

    a = np.zeros((n, frame.N))
    residual = np.zeros(n)
    used = np.full(n, float(level))
    restarts = np.zeros(n, dtype=np.int64)
    pending = np.flatnonzero(norms > 0)
    for attempt in range(max_restarts + 1):
        if pending.size == 0:
            break
        lvl = level * 2.0**attempt
        a_p, res_p, ok = _clip_and_correct(
            frame, X[pending], norms[pending], lvl, tol, gamma, rho, max_iter
        )
        a[pending] = a_p
        residual[pending] = res_p
        used[pending] = lvl
        restarts[pending] = attempt
        pending = pending[~ok]
        if pending.size:
            logger.debug("kashin: %d rows restart at level %g", pending.size, 2 * lvl)
    if pending.size:
        raise KashinConvergenceError(
            f"{pending.size} vector(s) did not converge after {max_restarts} restarts"
        )

    bound = used * norms / np.sqrt(frame.N)
    if single:
        return KashinCoefficients(a[0], float(bound[0]), float(residual[0]), float(used[0]), int(restarts[0]))
    return KashinCoefficients(a, bound, residual, used, restarts)


def empirical_level(frame: TightFrame, coeffs: KashinCoefficients, x: np.ndarray) -> np.ndarray:
    """max_j |a_j| * sqrt(N) / |x| per vector (0 for the zero vector)."""
    a = np.atleast_2d(coeffs.a)
    norms = np.linalg.norm(np.atleast_2d(x), axis=1)
    peak = np.abs(a).max(axis=1) * np.sqrt(frame.N)
    return np.divide(peak, norms, out=np.zeros_like(peak), where=norms > 0)


def calibrate_level(d: int, samples: int = 100, seed=0, level: float = DEFAULT_LEVEL) -> float:
    """Largest empirical Kashin level over random unit vectors.

    A sweep tool for choosing ``level``; the package default is not
    recomputed at import time.
    """
    rng = np.random.default_rng(seed)
    frame = build_frame(d, rng.integers(2**32))
    x = rng.standard_normal((samples, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    coeffs = kashin_decompose(frame, x, level=level)
    return float(empirical_level(frame, coeffs, x).max())
