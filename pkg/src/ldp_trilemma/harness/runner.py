"""Repetition loop, error metrics, accounting checks and CSV output."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core import BitPayload, ceil_log2
from ..estimators import (
    HeavyHitterEstimator,
    RHRDistributionEstimator,
    RHRFrequencyEstimator,
    SeparationEstimator,
    SQKRMeanEstimator,
    StatisticalSQKRMeanEstimator,
    SubsetSelectionEstimator,
)
from ..baselines import GroupReport, SsReport
from ..rhr import RhrMessage
from ..sqkr import SqkrMessage, _pack_signs
from .channel import BudgetViolation, Channel
from .config import ExperimentConfig
from .data import CategoricalSource, gen_atom_source, gen_categorical_data, gen_mean_data

CSV_COLUMNS = (
    "scheme", "task", "d", "n", "eps", "b", "rep",
    "l1", "l2sq", "linf", "bits_per_client", "shared_bits", "encode_ms", "decode_ms",
)
METRICS = ("l1", "l2sq", "linf", "bits_per_client", "shared_bits", "encode_ms", "decode_ms")


class InvariantViolation(RuntimeError):
    """A run broke a contract that should hold by construction."""


def error_metrics(estimate, truth) -> dict:
    diff = np.asarray(estimate, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    return {
        "l1": float(np.abs(diff).sum()),
        "l2sq": float(diff @ diff),
        "linf": float(np.abs(diff).max()),
    }


# --- workload -----------------------------------------------------------------


def make_workload(cfg: ExperimentConfig, rng: np.random.Generator):
    """Returns ``(data, truth)`` for one repetition.

    Distribution-free tasks use the realised empirical quantity as truth,
    statistical tasks the generating parameter.
    """
    source = cfg.resolved_source
    data_seed = int(rng.integers(2**63))
    if cfg.task == "mean":
        if source != "gaussian_mixture":
            raise ValueError(f"mean task supports source 'gaussian_mixture', got {source!r}")
        X = gen_mean_data(cfg.d, cfg.n, data_seed)
        return X, X.mean(axis=0)
    if cfg.task == "statistical_mean":
        kind, _, arg = source.partition(":")
        if kind != "atoms":
            raise ValueError(f"statistical_mean supports source 'atoms:<count>', got {source!r}")
        # the population is fixed by the config seed; only the sample varies per rep
        pop = gen_atom_source(cfg.d, int(arg or 16), seed=[cfg.seed, 0xA70])
        return pop.sample(cfg.n, rng), pop.mean
    src = CategoricalSource.parse(source)
    if cfg.task == "distribution":
        if src.kind == "file":
            raise ValueError("distribution estimation needs a generating distribution, not a file")
        p = src.probabilities(cfg.d)
        return gen_categorical_data(cfg.d, cfg.n, src, data_seed), p
    x = gen_categorical_data(cfg.d, cfg.n, src, data_seed)
    return x, np.bincount(x, minlength=cfg.d) / len(x)


def make_estimator(cfg: ExperimentConfig, rng: np.random.Generator):
    frame_seed = [cfg.seed, 0xF4A]
    if cfg.scheme == "sqkr":
        return SQKRMeanEstimator(cfg.eps, cfg.b, cfg.coin, cfg.level, frame_seed, rng)
    if cfg.scheme == "sqkr_stat":
        return StatisticalSQKRMeanEstimator(cfg.eps, cfg.b, cfg.level, frame_seed, rng)
    cls = {
        "rhr": RHRFrequencyEstimator,
        "rhr_dist": RHRDistributionEstimator,
        "heavy_hitter": HeavyHitterEstimator,
        "ss": SubsetSelectionEstimator,
        "separation": SeparationEstimator,
    }[cfg.scheme]
    return cls(cfg.d, cfg.eps, cfg.b, rng)


# --- channel and accounting ---------------------------------------------------


def budget_for(cfg: ExperimentConfig, est) -> int:
    """Per-client cap. b bits for the Hadamard/Kashin schemes, b index+sign
    pairs for private-coin SQKR, the natural report width for the baselines."""
    p = est.params_
    if cfg.scheme == "sqkr":
        return p.budget
    if cfg.scheme in ("ss", "separation"):
        return p.report_bits
    return cfg.b


def expected_shared_bits(cfg: ExperimentConfig, est) -> int:
    p = est.params_
    if cfg.scheme == "sqkr":
        return p.k * ceil_log2(p.N) if cfg.coin == "public" else 0
    if cfg.scheme == "rhr":
        return ceil_log2(p.B)
    if cfg.scheme == "heavy_hitter":
        return p.k * ceil_log2(p.D)
    return 0


def send(channel: Channel, cfg: ExperimentConfig, est, messages) -> np.ndarray:
    """Push every client's report through the channel; returns per-client bits."""
    p = est.params_
    if cfg.scheme in ("sqkr", "sqkr_stat"):
        extra = p.k * p.index_bits if messages.mode == "private_coin" else 0
        if messages.indices is not None and (messages.indices >> p.index_bits).any():
            raise BudgetViolation("sampled index wider than its field")
        return channel.transmit(messages.values, messages.k, extra)
    if cfg.scheme in ("rhr", "rhr_dist"):
        return channel.transmit(messages.values, messages.k)
    if cfg.scheme == "heavy_hitter":
        return channel.transmit(_pack_signs(messages.bits.astype(bool)), p.k)
    if cfg.scheme == "ss":
        return channel.transmit_bitmaps(messages.y)
    return channel.transmit_bitmaps(messages.bitmap)


def wire_roundtrip(cfg: ExperimentConfig, est, messages):
    """Serialise every report and parse it back; any mismatch is fatal."""
    p = est.params_
    n = len(messages)
    ok = True
    if cfg.scheme in ("sqkr", "sqkr_stat"):
        for i in range(n):
            m = messages[i]
            ok &= SqkrMessage.from_bytes(m.to_bytes(p.index_bits), p.index_bits) == m
    elif cfg.scheme in ("rhr", "rhr_dist"):
        for i in range(n):
            m = messages[i]
            ok &= RhrMessage.from_bytes(m.to_bytes(), m.r) == m
    elif cfg.scheme == "heavy_hitter":
        for v in _pack_signs(messages.bits.astype(bool)):
            payload = BitPayload(int(v), p.k)
            ok &= BitPayload.from_bytes(payload.to_bytes()) == payload
    elif cfg.scheme == "ss":
        for i in range(n):
            ok &= bool(np.array_equal(SsReport.from_bytes(messages.to_bytes(i), p.d).y[0], messages.y[i]))
    else:
        for i in range(n):
            back = GroupReport.from_bytes(messages.to_bytes(i), p.report_bits)
            ok &= back.group[0] == messages.group[i] and np.array_equal(back.bitmap[0], messages.bitmap[i])
    if not ok:
        raise InvariantViolation("wire round-trip changed a message")


# --- one repetition -----------------------------------------------------------


def run_repetition(cfg: ExperimentConfig, rep: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep]))
    data, truth = make_workload(cfg, rng)
    est = make_estimator(cfg, rng)
    est._init_randomness()

    t0 = time.perf_counter()
    messages = est.encode(data)
    t1 = time.perf_counter()
    channel = Channel(budget_for(cfg, est))
    bits = send(channel, cfg, est, messages)
    if cfg.wire:
        wire_roundtrip(cfg, est, messages)
    t2 = time.perf_counter()
    result = est.decode(messages)
    t3 = time.perf_counter()

    estimate = result if isinstance(result, np.ndarray) else result.values
    if not np.all(np.isfinite(estimate)):
        raise InvariantViolation("estimate contains non-finite values")
    if est.shared_bits_ != expected_shared_bits(cfg, est):
        raise InvariantViolation(
            f"shared randomness used {est.shared_bits_} bits, formula gives {expected_shared_bits(cfg, est)}"
        )
    if int(bits.max()) != est.payload_bits_:
        raise InvariantViolation(f"measured {int(bits.max())} payload bits, scheme declares {est.payload_bits_}")

    row = {
        "scheme": cfg.scheme, "task": cfg.task, "d": cfg.d, "n": cfg.n, "eps": cfg.eps, "b": cfg.b, "rep": rep,
        **error_metrics(estimate, truth),
        "bits_per_client": int(bits.max()),
        "shared_bits": int(est.shared_bits_),
        "encode_ms": (t1 - t0) * 1e3 if cfg.timing else 0.0,
        "decode_ms": (t3 - t2) * 1e3 if cfg.timing else 0.0,
    }
    return row


# --- report -------------------------------------------------------------------


@dataclass
class EstimateReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)

    def values(self, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.rows], dtype=np.float64)

    def mean(self, metric: str) -> float:
        return float(self.values(metric).mean())

    def stderr(self, metric: str) -> float:
        v = self.values(metric)
        return float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0

    def summary_row(self) -> dict:
        cfg = self.config
        row = {"scheme": cfg.scheme, "task": cfg.task, "d": cfg.d, "n": cfg.n, "eps": cfg.eps, "b": cfg.b,
               "rep": "summary"}
        for m in METRICS:
            row[m] = self.mean(m)
        row["bits_per_client"] = int(self.values("bits_per_client").max())
        row["shared_bits"] = int(self.values("shared_bits").max())
        return row

    def csv_rows(self) -> list:
        return [*self.rows, self.summary_row()]

    def summary_text(self) -> str:
        cfg = self.config
        head = f"{cfg.scheme} {cfg.task} d={cfg.d} n={cfg.n} eps={cfg.eps:g} b={cfg.b} reps={len(self.rows)}"
        errs = "  ".join(f"{m}={self.mean(m):.6g}±{self.stderr(m):.2g}" for m in ("l1", "l2sq", "linf"))
        bits = f"bits/client={self.summary_row()['bits_per_client']} shared={self.summary_row()['shared_bits']}"
        return f"{head}\n  {errs}\n  {bits}"


def run_experiment(cfg: ExperimentConfig) -> EstimateReport:
    """Runs ``cfg.reps`` independent repetitions, seeded from ``(seed, rep)``."""
    if cfg.jobs > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, cfg.reps)) as pool:
            rows = list(pool.map(run_repetition, [cfg] * cfg.reps, range(cfg.reps)))
    else:
        rows = [run_repetition(cfg, rep) for rep in range(cfg.reps)]
    return EstimateReport(cfg, rows)


def _format(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def write_csv(reports, handle) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        for row in report.csv_rows():
            writer.writerow([_format(row[c]) for c in CSV_COLUMNS])


def csv_text(reports) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    return buf.getvalue()
