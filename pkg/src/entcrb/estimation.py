"""Negativity and mixing estimators, their uncertainty, and model checks.

Count arguments accept a :class:`~entcrb.simulator.CoincidenceVector`, a
length-4 array, or an ``(n, 4)`` array of windows; estimators return a float
for a single window and an array otherwise. Estimates are never clipped to
[0, 1]; reports carry range flags instead.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import measurement, states
from .errors import DegenerateAngles, DegenerateDiagonal, EmptySample, InvalidArgument
from .simulator import CoincidenceVector, counts_matrix, shared_setting

ANGLE_TOL = 1e-6
SIGMA_LEVEL = 3.0

REPORT_KEYS = (
    "eps_hat_mean", "eps_hat_var", "var_times_K", "qcrb_ref", "p_hat_mean", "p_hat_var",
    "eps_true", "eps_true_err", "mean_K", "fano", "model", "consistent_3sigma",
)
SATURATION_HEADER = ["eps_true", "eps_true_err", "eps_hat_mean", "errbar", "qcrb_halfwidth"]


def _counts(k):
    if isinstance(k, CoincidenceVector):
        return np.array(k.k, dtype=float), True
    arr = np.asarray(k, dtype=float)
    if arr.shape == (4,):
        return arr, True
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise InvalidArgument(f"counts must have shape (4,) or (n, 4), got {arr.shape}")
    return arr, False


def _totals(k):
    total = k.sum(axis=-1)
    if np.any(total <= 0):
        raise EmptySample("window with zero total coincidences")
    return total


def _is_records(x):
    return isinstance(x, (list, tuple)) and len(x) > 0 and hasattr(x[0], "counts")


def _out(x, single):
    return float(x) if single else x


def rates(k):
    k, single = _counts(k)
    r = k / _totals(k)[..., None]
    return r if not single else r.copy()


def estimate_negativity(k, setting):
    """``V csc(2a) csc(2b) - cot(2a) cot(2b)`` with ``V`` the measured correlation."""
    s2a, s2b = math.sin(2 * setting.alpha), math.sin(2 * setting.beta)
    if abs(s2a) < ANGLE_TOL or abs(s2b) < ANGLE_TOL:
        raise DegenerateAngles(f"sin 2a = {s2a:.3g}, sin 2b = {s2b:.3g}: estimator undefined")
    c2a, c2b = math.cos(2 * setting.alpha), math.cos(2 * setting.beta)
    k, single = _counts(k)
    v = measurement.visibility(k) / _totals(k)
    return _out(v / (s2a * s2b) - (c2a * c2b) / (s2a * s2b), single)


def estimate_mixing(r, eps_hat):
    """Mixing estimate from diagonal-setting counts ``r``: ``eps_hat / (2 sqrt(q (1 - q)))``, ``q = r3/R``."""
    r, single = _counts(r)
    total = _totals(r)
    if np.any((r[..., 3] <= 0) | (r[..., 3] >= total)):
        raise DegenerateDiagonal("r3 is 0 or equal to R in at least one window")
    q = r[..., 3] / total
    return _out(np.asarray(eps_hat, dtype=float) / (2.0 * np.sqrt(q * (1.0 - q))), single)


def true_negativity(phi, p_hat_mean, model=states.Model.COHERENT):
    """Negativity implied by the waveplate angle and the estimated mixing."""
    if states.Model.parse(model) is states.Model.COHERENT:
        return p_hat_mean * math.sin(2 * phi)
    return max(0.0, -0.5 + 0.5 * p_hat_mean + p_hat_mean * math.sin(2 * phi))


def true_negativity_error(phi, p_hat_var, model=states.Model.COHERENT, p_hat_mean=None):
    """Spread of the inferred negativity caused by the spread of the mixing estimate."""
    sd = math.sqrt(max(p_hat_var, 0.0))
    if states.Model.parse(model) is states.Model.COHERENT:
        return sd * math.sin(2 * phi)
    if p_hat_mean is not None and true_negativity(phi, p_hat_mean, model) <= 0.0:
        return 0.0
    return sd * (0.5 + math.sin(2 * phi))


def propagate_variance(mean_k, var_k):
    """First-order variance of the optimal-setting estimator from per-outcome count moments."""
    m = np.asarray(mean_k, dtype=float)
    v = np.asarray(var_k, dtype=float)
    if np.any(m < 0) or np.any(v < 0):
        raise InvalidArgument("means and variances must be non-negative")
    total = m.sum()
    if total <= 0:
        raise EmptySample("mean total is zero")
    a, b = m[0] + m[3], m[1] + m[2]
    return float(4.0 * (a * a * (v[1] + v[2]) + b * b * (v[0] + v[3])) / total ** 4)


def poisson_variance_closed_form(k):
    """``4 (k0 + k3)(k1 + k2) / K^3``, which equals ``(1 - eps_hat^2) / K``."""
    k, single = _counts(k)
    total = _totals(k)
    return _out(4.0 * (k[..., 0] + k[..., 3]) * (k[..., 1] + k[..., 2]) / total ** 3, single)


@dataclass(frozen=True)
class SampleStats:
    mean: float
    variance: float
    count: int

    @property
    def standard_error(self):
        return math.sqrt(self.variance / self.count)


def sample_stats(values):
    """Mean and unbiased variance (divisor M - 1; NaN when M = 1)."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("no values")
    mean = float(x.mean())
    var = float(np.sum((x - mean) ** 2) / (x.size - 1)) if x.size > 1 else math.nan
    return SampleStats(mean, var, int(x.size))


def fano_factors(records):
    """Per-outcome variance/mean across runs; ``None`` where the mean count is zero."""
    if _is_records(records):
        shared_setting(records)
        k = counts_matrix(records).astype(float)
    else:
        k = np.asarray(records, dtype=float)
    if k.ndim != 2 or k.shape[0] < 2:
        raise EmptySample("Fano factors need at least two windows")
    mean = k.mean(axis=0)
    var = k.var(axis=0, ddof=1)
    return tuple(float(v / m) if m > 0 else None for m, v in zip(mean, var))


def estimate_werner(r, k, setting):
    """Werner-model estimates ``(p', eps')`` from diagonal counts ``r`` and counts ``k`` at ``setting``."""
    s2a, s2b = math.sin(2 * setting.alpha), math.sin(2 * setting.beta)
    if abs(s2a) < ANGLE_TOL or abs(s2b) < ANGLE_TOL:
        raise DegenerateAngles(f"sin 2a = {s2a:.3g}, sin 2b = {s2b:.3g}: estimator undefined")
    c2a, c2b = math.cos(2 * setting.alpha), math.cos(2 * setting.beta)
    r, single_r = _counts(r)
    k, single_k = _counts(k)
    p_w = measurement.visibility(r) / _totals(r)
    coherence = (measurement.visibility(k) / _totals(k) - c2a * c2b * p_w) / (s2a * s2b)
    eps_w = -0.5 + 0.5 * p_w + coherence
    single = single_r and single_k
    return _out(p_w, single), _out(eps_w, single)


@dataclass(frozen=True)
class EstimationReport:
    model: states.Model
    eps_hat: SampleStats
    p_hat: SampleStats
    eps_true: float
    eps_true_err: float
    var_times_K: float
    qcrb_ref: float
    mean_K: float
    fano: tuple
    consistent_3sigma: bool
    degenerate_runs: int = 0

    @property
    def errbar(self):
        return math.sqrt(self.var_times_K)

    @property
    def eps_hat_in_range(self):
        return 0.0 <= self.eps_hat.mean <= 1.0

    def to_json(self):
        def num(x):
            return None if x is None or not math.isfinite(x) else x

        return {
            "eps_hat_mean": num(self.eps_hat.mean),
            "eps_hat_var": num(self.eps_hat.variance),
            "var_times_K": num(self.var_times_K),
            "qcrb_ref": num(self.qcrb_ref),
            "p_hat_mean": num(self.p_hat.mean),
            "p_hat_var": num(self.p_hat.variance),
            "eps_true": num(self.eps_true),
            "eps_true_err": num(self.eps_true_err),
            "mean_K": num(self.mean_K),
            "fano": [num(f) for f in self.fano],
            "model": self.model.value,
            "consistent_3sigma": bool(self.consistent_3sigma),
            "runs": self.eps_hat.count,
            "eps_hat_in_range": bool(self.eps_hat_in_range),
            "degenerate_runs": self.degenerate_runs,
        }

    @classmethod
    def from_json(cls, doc):
        def num(x):
            return math.nan if x is None else float(x)

        m = int(doc.get("runs", 0))
        return cls(
            model=states.Model.parse(doc["model"]),
            eps_hat=SampleStats(num(doc["eps_hat_mean"]), num(doc["eps_hat_var"]), m),
            p_hat=SampleStats(num(doc["p_hat_mean"]), num(doc["p_hat_var"]), m),
            eps_true=num(doc["eps_true"]),
            eps_true_err=num(doc["eps_true_err"]),
            var_times_K=num(doc["var_times_K"]),
            qcrb_ref=num(doc["qcrb_ref"]),
            mean_K=num(doc["mean_K"]),
            fano=tuple(None if f is None else float(f) for f in doc["fano"]),
            consistent_3sigma=bool(doc["consistent_3sigma"]),
            degenerate_runs=int(doc.get("degenerate_runs", 0)),
        )


def is_consistent(eps_hat, eps_true, sigmas=SIGMA_LEVEL):
    """``|mean - eps_true| <= sigmas * sqrt(Var / M)``."""
    if not (math.isfinite(eps_hat.mean) and math.isfinite(eps_true) and math.isfinite(eps_hat.variance)):
        return False
    return abs(eps_hat.mean - eps_true) <= sigmas * eps_hat.standard_error


def _per_run(main, diag):
    k = counts_matrix(main) if _is_records(main) else np.asarray(main, dtype=float)
    r = counts_matrix(diag) if _is_records(diag) else np.asarray(diag, dtype=float)
    if k.shape != r.shape:
        raise InvalidArgument(f"main and diagonal runs differ in shape: {k.shape} vs {r.shape}")
    if k.shape[0] < 2:
        raise EmptySample("a report needs at least two runs")
    return k.astype(float), r.astype(float)


def estimate_report(main, diag, phi, model=states.Model.COHERENT, setting=measurement.OPTIMAL):
    """Summarize paired runs (main setting ``k_j``, diagonal setting ``r_j``) under one state model.

    ``main``/``diag`` are record lists or ``(M, 4)`` count arrays. ``phi`` is
    the known waveplate angle used to infer the true negativity.
    """
    model = states.Model.parse(model)
    if _is_records(main):
        setting = shared_setting(main)
    k, r = _per_run(main, diag)
    mean_K = float(k.sum(axis=1).mean())
    degenerate = 0
    if model is states.Model.COHERENT:
        eps_j = estimate_negativity(k, setting)
        valid = (r[:, 3] > 0) & (r[:, 3] < r.sum(axis=1))
        degenerate = int((~valid).sum())
        p_j = estimate_mixing(r[valid], eps_j[valid]) if valid.any() else np.array([math.nan])
    else:
        p_j, eps_j = estimate_werner(r, k, setting)
    eps_stats = sample_stats(eps_j)
    p_stats = sample_stats(p_j) if np.size(p_j) else SampleStats(math.nan, math.nan, 0)
    if math.isfinite(p_stats.mean):
        eps_true = true_negativity(phi, p_stats.mean, model)
        eps_true_err = true_negativity_error(phi, p_stats.variance, model, p_stats.mean)
    else:
        eps_true = eps_true_err = math.nan
    return EstimationReport(
        model=model,
        eps_hat=eps_stats,
        p_hat=p_stats,
        eps_true=eps_true,
        eps_true_err=eps_true_err,
        var_times_K=eps_stats.variance * mean_K,
        qcrb_ref=1.0 - eps_true * eps_true,
        mean_K=mean_K,
        fano=fano_factors(k),
        consistent_3sigma=is_consistent(eps_stats, eps_true),
        degenerate_runs=degenerate,
    )


def model_discrimination(report_a, report_b, sigmas=SIGMA_LEVEL):
    """Per-model 3-sigma consistency verdict for two reports built from the same runs.

    Each report is judged against its own inferred true negativity: the same
    waveplate angle, combined with the mixing that model estimates.
    """
    if report_a.eps_hat.count != report_b.eps_hat.count:
        raise InvalidArgument("reports were built from different numbers of runs")
    return {
        rep.model.value: is_consistent(rep.eps_hat, rep.eps_true, sigmas)
        for rep in (report_a, report_b)
    }


def saturation_row(report):
    """``(eps_true, eps_true_err, eps_hat_mean, errbar, qcrb_halfwidth)`` for one configuration.

    ``errbar`` is ``sqrt(Var * <K>)``; the QCRB half-width is ``H^{-1/2} = sqrt(1 - eps_true^2)``.
    """
    half = math.sqrt(report.qcrb_ref) if report.qcrb_ref >= 0 else math.nan
    return (report.eps_true, report.eps_true_err, report.eps_hat.mean, report.errbar, half)


def write_saturation_csv(reports, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SATURATION_HEADER)
        for rep in reports:
            writer.writerow([f"{x:.9g}" for x in saturation_row(rep)])
