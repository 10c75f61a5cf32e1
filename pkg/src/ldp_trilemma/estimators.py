"""scikit-learn style estimators wrapping the protocols.

``fit(X)`` simulates every client and the server and stores the estimate in
``mean_`` or ``frequencies_``. ``encode``/``decode`` expose the two halves
separately for timing and channel checks. Hyper-parameters are plain
constructor arguments, so ``get_params``/``set_params``/``clone`` work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import (
    SeparationParams,
    SsParams,
    separation_decode,
    separation_encode,
    ss_decode,
    ss_encode,
)
from .frames import DEFAULT_LEVEL, build_frame
from .privacy import SharedRandomness
from .rhr import (
    HeavyHitterParams,
    RhrParams,
    heavy_hitter_decode,
    heavy_hitter_encode,
    rhr_decode_frequency,
    rhr_distribution_decode,
    rhr_distribution_encode,
    rhr_encode,
)
from .sqkr import SqkrParams, sqkr_decode, sqkr_encode, sqkr_group_decode, sqkr_group_encode


def _generator(random_state) -> np.random.Generator:
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def _check_vectors(X) -> np.ndarray:
    return check_array(X, dtype=np.float64, ensure_min_samples=1)


def _check_symbols(X, d: int) -> np.ndarray:
    x = check_array(np.asarray(X).reshape(-1, 1), dtype=None, ensure_min_samples=1).ravel()
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(np.mod(x, 1) == 0):
            raise ValueError("symbols must be integers")
        x = x.astype(np.int64)
    if (x < 0).any() or (x >= d).any():
        raise ValueError(f"symbol outside [0, {d})")
    return x


class _ProtocolEstimator(BaseEstimator):
    """Common plumbing: a private generator plus a public-coin seed."""

    def _init_randomness(self):
        rng = _generator(self.random_state)
        self._rng = rng
        self._shared_seed = int(rng.integers(2**63))

    def fit(self, X, y=None):
        self._init_randomness()
        messages = self.encode(X)
        self._set_estimate(self.decode(messages))
        return self


class SQKRMeanEstimator(_ProtocolEstimator):
    """Empirical mean of unit-ball vectors under eps-LDP with b bits.

    ``coin`` selects public-coin sampling (indices from the shared stream)
    or private-coin sampling (indices appended to the message).
    """

    def __init__(self, epsilon=1.0, bits=1, coin="public", level=DEFAULT_LEVEL, frame_seed=0, random_state=None):
        self.epsilon = epsilon
        self.bits = bits
        self.coin = coin
        self.level = level
        self.frame_seed = frame_seed
        self.random_state = random_state

    def _params(self, d: int) -> SqkrParams:
        if self.coin not in ("public", "private"):
            raise ValueError(f"coin must be 'public' or 'private', got {self.coin!r}")
        frame = build_frame(d, self.frame_seed)
        return SqkrParams(self.epsilon, self.bits, frame, f"{self.coin}_coin", self.level)

    def encode(self, X):
        X = _check_vectors(X)
        if not hasattr(self, "_rng"):
            self._init_randomness()
        self.params_ = self._params(X.shape[1])
        ids = np.arange(X.shape[0])
        stream = SharedRandomness(self._shared_seed, ids)
        msgs = sqkr_encode(X, self.params_, stream, self._rng)
        self.shared_bits_ = stream.bits_consumed if self.coin == "public" else 0
        self.payload_bits_ = self.params_.payload_bits
        self.n_effective_ = X.shape[0]
        return msgs

    def decode(self, messages):
        check_is_fitted(self, "params_")
        stream = None
        if self.coin == "public":
            stream = SharedRandomness(self._shared_seed, np.asarray(messages.client_ids))
        return sqkr_decode(messages, self.params_, stream)

    def _set_estimate(self, est):
        self.mean_ = est


class StatisticalSQKRMeanEstimator(_ProtocolEstimator):
    """Mean of the generating distribution from i.i.d. clients; no shared
    randomness. Remainder clients beyond a whole number of coordinate
    blocks are dropped (see ``n_effective_``)."""

    def __init__(self, epsilon=1.0, bits=1, level=DEFAULT_LEVEL, frame_seed=0, random_state=None):
        self.epsilon = epsilon
        self.bits = bits
        self.level = level
        self.frame_seed = frame_seed
        self.random_state = random_state

    def encode(self, X):
        X = _check_vectors(X)
        if not hasattr(self, "_rng"):
            self._init_randomness()
        frame = build_frame(X.shape[1], self.frame_seed)
        self.params_ = SqkrParams(self.epsilon, self.bits, frame, "statistical_grouping", self.level)
        msgs = sqkr_group_encode(X, self.params_, self._rng)
        self.shared_bits_ = 0
        self.payload_bits_ = self.params_.payload_bits
        self.n_effective_ = len(msgs)
        return msgs

    def decode(self, messages):
        check_is_fitted(self, "params_")
        return sqkr_group_decode(messages, self.params_)

    def _set_estimate(self, est):
        self.mean_ = est


class _CategoricalEstimator(_ProtocolEstimator):
    def __init__(self, n_symbols=2, epsilon=1.0, bits=1, random_state=None):
        self.n_symbols = n_symbols
        self.epsilon = epsilon
        self.bits = bits
        self.random_state = random_state

    def _prepare(self, X):
        x = _check_symbols(X, self.n_symbols)
        if not hasattr(self, "_rng"):
            self._init_randomness()
        return x

    def _set_estimate(self, est):
        self.frequencies_ = est.values
        self.estimate_ = est


class RHRFrequencyEstimator(_CategoricalEstimator):
    """Empirical histogram of arbitrary symbols (public coin, one shared
    row-group draw per client)."""

    def encode(self, X):
        x = self._prepare(X)
        self.params_ = RhrParams(self.n_symbols, self.epsilon, self.bits)
        stream = SharedRandomness(self._shared_seed, np.arange(len(x)))
        r = stream.draw(self.params_.B)
        self.shared_bits_ = stream.bits_consumed
        self.payload_bits_ = self.params_.k
        self.n_effective_ = len(x)
        return rhr_encode(x, r, self.params_, self._rng)

    def decode(self, messages):
        check_is_fitted(self, "params_")
        # the server re-derives every r_i from the shared stream
        replay = SharedRandomness(self._shared_seed, np.arange(len(messages)))
        r = np.atleast_1d(replay.draw(self.params_.B))
        if not np.array_equal(r, messages.r):
            raise ValueError("stream desync: row groups differ from the shared stream")
        return rhr_decode_frequency(messages, self.params_)


class RHRDistributionEstimator(_CategoricalEstimator):
    """Distribution of i.i.d. symbols; client i uses row group i mod B."""

    def encode(self, X):
        x = self._prepare(X)
        self.params_ = RhrParams(self.n_symbols, self.epsilon, self.bits)
        if len(x) < self.params_.B:
            raise ValueError(f"need at least B = {self.params_.B} clients")
        self.shared_bits_ = 0
        self.payload_bits_ = self.params_.k
        self.n_effective_ = len(x)
        return rhr_distribution_encode(x, self.params_, self._rng)

    def decode(self, messages):
        check_is_fitted(self, "params_")
        return rhr_distribution_decode(messages, self.params_)


class HeavyHitterEstimator(_CategoricalEstimator):
    """Histogram with an l-infinity guarantee from k one-bit Hadamard samples."""

    def encode(self, X):
        x = self._prepare(X)
        self.params_ = HeavyHitterParams(self.n_symbols, self.epsilon, self.bits)
        stream = SharedRandomness(self._shared_seed, np.arange(len(x)))
        msgs = heavy_hitter_encode(x, self.params_, stream, self._rng)
        self.shared_bits_ = stream.bits_consumed
        self.payload_bits_ = self.params_.k
        self.n_effective_ = len(x)
        return msgs

    def decode(self, messages):
        check_is_fitted(self, "params_")
        return heavy_hitter_decode(messages, self.params_)


class SubsetSelectionEstimator(_CategoricalEstimator):
    """Subset Selection reports (d-bit bitmaps); ``bits`` is not used."""

    def encode(self, X):
        x = self._prepare(X)
        self.params_ = SsParams(self.n_symbols, self.epsilon)
        self.shared_bits_ = 0
        self.payload_bits_ = self.params_.report_bits
        self.n_effective_ = len(x)
        return ss_encode(x, self.params_, self._rng)

    def decode(self, messages):
        check_is_fitted(self, "params_")
        return ss_decode(messages, self.params_)


class SeparationEstimator(_CategoricalEstimator):
    """SS followed by grouping: each client sends one 2^b-coordinate slice."""

    def encode(self, X):
        x = self._prepare(X)
        self.params_ = SeparationParams(self.n_symbols, self.epsilon, self.bits)
        if len(x) < self.params_.groups:
            raise ValueError(f"need at least s = {self.params_.groups} clients")
        self.shared_bits_ = 0
        self.payload_bits_ = self.params_.report_bits
        self.n_effective_ = len(x)
        return separation_encode(x, self.params_, self._rng)

    def decode(self, messages):
        check_is_fitted(self, "params_")
        return separation_decode(messages, self.params_)
