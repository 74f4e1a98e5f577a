"""Coincidence-count generation.

Each acquisition window yields four counts, one per POVM outcome, drawn as
independent Poisson variables with means ``mean_total * p_t``. An optional
multinomial mode draws the window total first and then distributes it over
the outcomes.

Randomness is addressed, not sequential: the draw for outcome ``t`` of run
``j`` in stream ``s`` uses the key ``(seed, s, j, t)`` (see
:mod:`entcrb.kernels`). Output therefore does not depend on the order in
which runs are generated.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels, measurement, states
from .errors import InvalidArgument

LANE_TOTAL = 4
LANE_CATEGORY = 5
SHUFFLE_STREAM = 1 << 20
WHOLE_VECTOR_LANE = 4

RUNS_HEADER = ["run", "alpha_rad", "beta_rad", "k0", "k1", "k2", "k3", "window_s"]


@dataclass(frozen=True)
class CoincidenceVector:
    k: tuple

    def __post_init__(self):
        k = tuple(int(x) for x in self.k)
        if len(k) != 4 or min(k) < 0:
            raise InvalidArgument(f"coincidence vector needs four non-negative counts, got {self.k!r}")
        object.__setattr__(self, "k", k)

    @property
    def total(self):
        return sum(self.k)

    def as_array(self):
        return np.array(self.k, dtype=np.int64)


@dataclass(frozen=True)
class StreamKey:
    """Address of one acquisition window in the random stream."""

    seed: int
    run: int = 0
    stream: int = 0


@dataclass(frozen=True)
class RunConfig:
    params: states.StateParams
    setting: measurement.MeasurementSetting
    mean_total: float = 1e4
    window_seconds: float = 10.0
    runs: int = 30
    seed: int = 0
    stream: int = 0
    multinomial: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.mean_total) and self.mean_total > 0):
            raise InvalidArgument(f"mean_total must be positive, got {self.mean_total!r}")
        if not self.window_seconds > 0:
            raise InvalidArgument(f"window_seconds must be positive, got {self.window_seconds!r}")
        if int(self.runs) < 1:
            raise InvalidArgument(f"runs must be >= 1, got {self.runs!r}")


@dataclass(frozen=True)
class RunRecord:
    run_index: int
    setting: measurement.MeasurementSetting
    counts: CoincidenceVector
    window_seconds: float = field(default=10.0)


def _check_distribution(d):
    d = np.asarray(d, dtype=float)
    if d.shape != (4,) or np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
        raise InvalidArgument(f"outcome distribution must be 4 probabilities summing to 1, got {d!r}")
    return d


def sample_count_matrix(d, mean_total, seed, runs, stream=0, multinomial=False):
    """Counts for many windows at once: array ``(len(runs), 4)``."""
    d = _check_distribution(d)
    if not mean_total > 0:
        raise InvalidArgument(f"mean_total must be positive, got {mean_total!r}")
    runs = np.atleast_1d(np.asarray(runs, dtype=np.uint64))
    if multinomial:
        total_keys = kernels.stream_keys(seed, runs, LANE_TOTAL, stream)
        cat_keys = kernels.stream_keys(seed, runs, LANE_CATEGORY, stream)
        cum = np.cumsum(d)[:3]
        return kernels.multinomial_batch(cum, float(mean_total), total_keys, cat_keys)
    keys = kernels.stream_keys(seed, runs[:, None], np.arange(4, dtype=np.uint64)[None, :], stream)
    lam = np.broadcast_to(mean_total * d, keys.shape)
    flat = kernels.poisson_batch(np.ascontiguousarray(lam, dtype=np.float64).ravel(), keys.ravel())
    return flat.reshape(keys.shape)


def sample_counts(d, mean_total, rng_state, multinomial=False):
    """One window of coincidence counts for outcome distribution ``d``."""
    if not mean_total > 0:
        raise InvalidArgument(f"mean_total must be positive, got {mean_total!r}")
    k = sample_count_matrix(d, mean_total, rng_state.seed, [rng_state.run], rng_state.stream, multinomial)
    return CoincidenceVector(tuple(k[0]))


def config_probabilities(config):
    return measurement.outcome_probabilities(states.make_state(config.params), config.setting)


def simulate_counts(config):
    """Counts array ``(runs, 4)`` for run indices ``1..runs``."""
    d = config_probabilities(config)
    runs = np.arange(1, int(config.runs) + 1)
    return sample_count_matrix(d, config.mean_total, config.seed, runs, config.stream, config.multinomial)


def records_from_counts(counts, setting, window_seconds=10.0, first_index=1):
    return [RunRecord(first_index + j, setting, CoincidenceVector(tuple(row)), window_seconds)
            for j, row in enumerate(np.asarray(counts))]


def run_experiment(config):
    return records_from_counts(simulate_counts(config), config.setting, config.window_seconds)


def counts_matrix(records):
    if not records:
        return np.zeros((0, 4), dtype=np.int64)
    return np.array([r.counts.k for r in records], dtype=np.int64)


def shared_setting(records):
    settings = {r.setting for r in records}
    if len(settings) > 1:
        raise InvalidArgument(f"records mix {len(settings)} different settings")
    return next(iter(settings)) if settings else None


def _permutation(n, seed, lane, stream):
    # Fisher-Yates driven by the counter-based stream
    perm = np.arange(n)
    if n < 2:
        return perm
    key = kernels.stream_keys(seed, 0, lane, stream)
    u = kernels.uniforms(np.full(n, key, dtype=np.uint64), np.arange(n, dtype=np.uint64))
    for i in range(n - 1, 0, -1):
        j = min(int(u[i] * (i + 1)), i)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def shuffle_composition(records, seed, mode="per-outcome", stream=0):
    """Randomize how counts are grouped into vectors across runs.

    ``per-outcome`` permutes each outcome's column of counts independently
    (every per-outcome multiset is preserved). ``whole-vector`` permutes the
    run order of complete vectors.
    """
    shared_setting(records)
    counts = counts_matrix(records)
    n = len(records)
    s = SHUFFLE_STREAM + int(stream)
    if mode == "per-outcome":
        out = np.empty_like(counts)
        for t in range(4):
            out[:, t] = counts[_permutation(n, seed, t, s), t]
    elif mode == "whole-vector":
        out = counts[_permutation(n, seed, WHOLE_VECTOR_LANE, s)]
    else:
        raise InvalidArgument(f"unknown shuffle mode {mode!r}")
    return [replace(r, counts=CoincidenceVector(tuple(row))) for r, row in zip(records, out)]


def write_runs_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUNS_HEADER)
        for r in records:
            writer.writerow([r.run_index, f"{r.setting.alpha:.9g}", f"{r.setting.beta:.9g}",
                             *r.counts.k, f"{r.window_seconds:.9g}"])


def read_runs_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RUNS_HEADER:
            raise InvalidArgument(f"{path}: expected header {','.join(RUNS_HEADER)}")
        return [
            RunRecord(
                int(row["run"]),
                measurement.MeasurementSetting(float(row["alpha_rad"]), float(row["beta_rad"])),
                CoincidenceVector((row["k0"], row["k1"], row["k2"], row["k3"])),
                float(row["window_s"]),
            )
            for row in reader
        ]
