"""Four-outcome product POVM, outcome probabilities and classical Fisher information.

Outcome ``t = s + 2 s'`` projects onto ``|alpha + s pi/2> (x) |beta + s' pi/2>``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg, states
from .errors import InvalidArgument

PROB_TOL = 1e-12
# derivative magnitude treated as zero when the outcome probability vanishes
DERIV_TOL = 1e-7
DEFAULT_SCAN_STEP = math.pi / 72
BOUNDARY_MARGIN = 1e-3


@dataclass(frozen=True)
class MeasurementSetting:
    alpha: float
    beta: float

    @classmethod
    def degrees(cls, alpha_deg, beta_deg):
        return cls(math.radians(alpha_deg), math.radians(beta_deg))


OPTIMAL = MeasurementSetting(-math.pi / 4, math.pi / 4)
DIAGONAL = MeasurementSetting(0.0, 0.0)


def _outcome_kets(alpha, beta):
    """Array ``(..., 4, 4)``: last-but-one axis is the outcome ``t``, last is the HH..VV amplitude."""
    alpha = np.asarray(alpha, dtype=float)[..., None]
    beta = np.asarray(beta, dtype=float)[..., None]
    shifts = np.array([0.0, 1.0, 0.0, 1.0]) * (np.pi / 2)
    shifts_b = np.array([0.0, 0.0, 1.0, 1.0]) * (np.pi / 2)
    a = alpha + shifts
    b = beta + shifts_b
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    return np.stack([ca * cb, ca * sb, sa * cb, sa * sb], axis=-1)


def povm_element(t, setting):
    if t not in (0, 1, 2, 3):
        raise InvalidArgument(f"outcome index must be 0..3, got {t!r}")
    s, s2 = t % 2, t // 2
    a = linalg.linear_polarization(setting.alpha + s * math.pi / 2)
    b = linalg.linear_polarization(setting.beta + s2 * math.pi / 2)
    return linalg.tensor_projector(a, b)


def povm(setting):
    return np.stack([povm_element(t, setting) for t in range(4)])


def _expectations(op, kets):
    # <v|op|v> for real kets v
    return np.einsum("...i,ij,...j->...", kets, op, kets).real


def outcome_probabilities(rho, setting):
    """``Tr[rho Pi_t]`` for t = 0..3, clipped at zero and renormalized."""
    rho = linalg.check_density(rho)
    probs = _expectations(rho, _outcome_kets(setting.alpha, setting.beta))
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def visibility(d):
    d = np.asarray(d, dtype=float)
    return d[..., 0] - d[..., 1] - d[..., 2] + d[..., 3]


def visibility_closed_form(epsilon, setting):
    """Coherent-mixture correlation ``cos2a cos2b + eps sin2a sin2b``."""
    a, b = 2.0 * setting.alpha, 2.0 * setting.beta
    return math.cos(a) * math.cos(b) + epsilon * math.sin(a) * math.sin(b)


def _info(p0, da, db):
    """Sum over outcomes of ``da*db/p``; inf where p vanishes but a derivative does not."""
    zero = p0 <= PROB_TOL
    divergent = np.any(zero & ((np.abs(da) > DERIV_TOL) | (np.abs(db) > DERIV_TOL)), axis=-1)
    safe = np.where(zero, 1.0, p0)
    terms = np.where(zero, 0.0, da * db / safe)
    return np.where(divergent, np.inf, terms.sum(axis=-1))


def _fisher_grid(params, kets, d_eps, nuisance):
    rho = linalg.check_density(states.make_state(params))
    p0 = _expectations(rho, kets)
    de = _expectations(states.state_derivative(params, "epsilon", d_eps), kets)
    f_ee = _info(p0, de, de)
    if not nuisance:
        return f_ee
    dp = _expectations(states.state_derivative(params, "p", d_eps), kets)
    f_pp = _info(p0, dp, dp)
    f_ep = _info(p0, de, dp)
    # outcomes that carry no information about p leave f_ee untouched
    informative = f_pp > 1e-10 * (1.0 + np.abs(f_ee))
    with np.errstate(invalid="ignore", divide="ignore"):
        adjusted = f_ee - f_ep * f_ep / np.where(informative, f_pp, 1.0)
    out = np.where(informative & np.isfinite(f_pp), adjusted, f_ee)
    return np.where(np.isfinite(f_ee), np.maximum(out, 0.0), np.inf)


def fisher_information(params, setting, d_eps=states.DEFAULT_D_EPS, nuisance=True):
    """Classical Fisher information about the negativity for one polarizer setting.

    With ``nuisance=True`` (default) the mixing ``p`` is treated as unknown and
    the information is the Schur complement ``F_ee - F_ep^2 / F_pp`` of the
    2x2 Fisher matrix over ``(epsilon, p)``. ``nuisance=False`` gives ``F_ee``
    at fixed, known ``p``. Returns ``math.inf`` when an outcome of zero
    probability has a non-zero derivative.
    """
    kets = _outcome_kets(setting.alpha, setting.beta)
    return float(_fisher_grid(params, kets, d_eps, nuisance))


@dataclass(frozen=True)
class ScanResult:
    best: MeasurementSetting
    best_value: float
    alphas: np.ndarray
    betas: np.ndarray
    f_map: np.ndarray
    qfi: float


def optimal_setting_scan(params, grid_step=DEFAULT_SCAN_STEP, d_eps=states.DEFAULT_D_EPS, nuisance=True):
    """Exhaustive Fisher-information map over ``alpha, beta`` in ``[-pi/2, pi/2)``.

    Projectors are pi-periodic in each angle, so this covers every setting.
    Points closer than ``BOUNDARY_MARGIN`` to the pure boundary ``epsilon = p``
    are refused.
    """
    if not 0.0 < grid_step <= math.pi / 8:
        raise InvalidArgument(f"grid_step must lie in (0, pi/8], got {grid_step!r}")
    eps = params.epsilon
    if params.model is states.Model.COHERENT and eps > params.p - BOUNDARY_MARGIN:
        raise states.DerivativeSingularity(
            f"epsilon = {eps:.6g} is within {BOUNDARY_MARGIN:g} of the pure boundary epsilon = p")
    n = int(round(math.pi / grid_step))
    grid = -math.pi / 2 + grid_step * np.arange(n)
    grid = grid[grid < math.pi / 2 - 1e-12]
    A, B = np.meshgrid(grid, grid, indexing="ij")
    f_map = _fisher_grid(params, _outcome_kets(A, B), d_eps, nuisance)
    i, j = np.unravel_index(np.argmax(np.where(np.isfinite(f_map), f_map, -np.inf)), f_map.shape)
    return ScanResult(
        best=MeasurementSetting(float(grid[i]), float(grid[j])),
        best_value=float(f_map[i, j]),
        alphas=grid.copy(),
        betas=grid.copy(),
        f_map=f_map,
        qfi=states.qfi(params, d_eps).h_numeric,
    )
