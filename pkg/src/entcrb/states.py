"""The two state families and their information geometry.

``CoherentMixture``: ``p |psi_phi><psi_phi| + (1 - p) D_phi`` with
``|psi_phi> = cos(phi)|HH> + sin(phi)|VV>`` and the dephased mixture
``D_phi = cos^2(phi)|HH><HH| + sin^2(phi)|VV><VV|``.

``Werner``: ``p |psi_phi><psi_phi| + (1 - p) I/4``.

Quantum Fisher information is taken with respect to the negativity
``epsilon``. Two numbers are reported: the information at fixed, known
mixing ``p`` (``h_fixed_p``), and the information when ``p`` is an unknown
nuisance parameter (``h_numeric``), i.e. ``1 / [H^-1]_{eps,eps}`` from the
2x2 SLD information matrix over ``(epsilon, p)``. The latter is the figure
of merit for an experiment that estimates ``p`` separately, and for the
coherent mixture it equals ``1 / (1 - epsilon^2)`` for every ``p``.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DerivativeSingularity, InvalidArgument, UnreachableNegativity

SLD_CUTOFF = 1e-10
DEFAULT_D_EPS = 1e-6
PURE_TOL = 1e-12


class Model(str, enum.Enum):
    COHERENT = "coherent"
    WERNER = "werner"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown model {value!r}; expected 'coherent' or 'werner'") from None


@dataclass(frozen=True)
class StateParams:
    model: Model
    phi: float
    p: float

    def __post_init__(self):
        object.__setattr__(self, "model", Model.parse(self.model))
        phi, p = float(self.phi), float(self.p)
        if not (math.isfinite(phi) and -1e-15 <= phi <= math.pi / 4 + 1e-15):
            raise InvalidArgument(f"phi must lie in [0, pi/4], got {phi!r}")
        if not (math.isfinite(p) and 0.0 <= p <= 1.0):
            raise InvalidArgument(f"p must lie in [0, 1], got {p!r}")
        object.__setattr__(self, "phi", min(max(phi, 0.0), math.pi / 4))
        object.__setattr__(self, "p", p)

    @property
    def epsilon(self):
        return negativity_closed_form(self)

    @classmethod
    def coherent(cls, phi, p):
        return cls(Model.COHERENT, phi, p)

    @classmethod
    def werner(cls, phi, p):
        return cls(Model.WERNER, phi, p)


@dataclass(frozen=True)
class QfiResult:
    epsilon: float
    h_analytic: float
    h_numeric: float
    h_fixed_p: float
    sld: np.ndarray
    residual: float
    nuisance_adjusted: bool


def make_pure(phi):
    if not (0.0 <= phi <= math.pi / 4 + 1e-15):
        raise InvalidArgument(f"phi must lie in [0, pi/4], got {phi!r}")
    return np.array([math.cos(phi), 0.0, 0.0, math.sin(phi)], dtype=complex)


def state_matrix(model, phi, p):
    """Unvalidated family member; also accepts points just outside the domain
    so finite-difference stencils can be evaluated."""
    c, s = math.cos(phi), math.sin(phi)
    rho = np.zeros((4, 4), dtype=complex)
    if Model.parse(model) is Model.COHERENT:
        rho[0, 0] = c * c
        rho[3, 3] = s * s
        rho[0, 3] = rho[3, 0] = p * s * c
    else:
        rho[0, 0] = p * c * c
        rho[3, 3] = p * s * s
        rho[0, 3] = rho[3, 0] = p * s * c
        rho += (1.0 - p) / 4.0 * np.eye(4)
    return rho


def make_state(params):
    return linalg.check_density(state_matrix(params.model, params.phi, params.p))


def negativity_closed_form(params):
    sin2 = math.sin(2.0 * params.phi)
    if params.model is Model.COHERENT:
        return params.p * sin2
    return max(0.0, -0.5 + 0.5 * params.p + params.p * sin2)


def qfi_closed_form(epsilon):
    """``1 / (1 - epsilon^2)``."""
    if not 0.0 <= epsilon < 1.0:
        raise InvalidArgument(f"epsilon must lie in [0, 1), got {epsilon!r}")
    return 1.0 / (1.0 - epsilon * epsilon)


def phi_from_negativity(epsilon, p):
    """Waveplate angle giving negativity ``epsilon`` in the coherent mixture with mixing ``p``."""
    if not (0.0 <= epsilon and 0.0 <= p <= 1.0):
        raise InvalidArgument(f"need epsilon >= 0 and p in [0, 1], got {epsilon!r}, {p!r}")
    if epsilon > p or (p == 0.0 and epsilon > 0.0):
        raise UnreachableNegativity(f"negativity {epsilon} exceeds mixing p = {p}")
    if p == 0.0:
        return 0.0
    return 0.5 * math.asin(min(epsilon / p, 1.0))


def _sin2phi(model, epsilon, p):
    if Model.parse(model) is Model.COHERENT:
        return epsilon / p
    return (epsilon + 0.5 - 0.5 * p) / p


def _state_at(model, epsilon, p):
    return state_matrix(model, 0.5 * math.asin(_sin2phi(model, epsilon, p)), p)


def _interior(model, epsilon, p):
    x = _sin2phi(model, epsilon, p) if p > 0.0 else -1.0
    return epsilon > 0.0 and 0.0 < x < 1.0


def state_derivative(params, wrt="epsilon", d=DEFAULT_D_EPS):
    """Finite-difference derivative of the state along ``epsilon`` (at fixed ``p``)
    or along ``p`` (at fixed ``epsilon``).

    The epsilon derivative is a central difference. The p derivative falls
    back to a second-order backward stencil when ``p + d`` would exceed 1.
    """
    if d <= 0.0:
        raise InvalidArgument(f"finite-difference step must be positive, got {d!r}")
    model, eps, p = params.model, params.epsilon, params.p
    if wrt == "epsilon":
        if not (_interior(model, eps - d, p) and _interior(model, eps + d, p)):
            raise DerivativeSingularity(
                f"epsilon = {eps:.6g} is within {d:g} of the boundary of its domain at p = {p:.6g}")
        return (_state_at(model, eps + d, p) - _state_at(model, eps - d, p)) / (2.0 * d)
    if wrt == "p":
        if p + d <= 1.0 and _interior(model, eps, p + d) and _interior(model, eps, p - d):
            return (_state_at(model, eps, p + d) - _state_at(model, eps, p - d)) / (2.0 * d)
        if _interior(model, eps, p - 2.0 * d) and _interior(model, eps, p - d):
            return (3.0 * _state_at(model, eps, p) - 4.0 * _state_at(model, eps, p - d)
                    + _state_at(model, eps, p - 2.0 * d)) / (2.0 * d)
        raise DerivativeSingularity(f"no valid stencil for d/dp at epsilon = {eps:.6g}, p = {p:.6g}")
    raise InvalidArgument(f"wrt must be 'epsilon' or 'p', got {wrt!r}")


def sld_from_derivative(rho, drho, cutoff=SLD_CUTOFF):
    """Solve ``drho = (L rho + rho L) / 2`` for Hermitian ``L`` on the support of ``rho``."""
    w, v = linalg.eig_hermitian(rho)
    d = v.conj().T @ drho @ v
    denom = w[:, None] + w[None, :]
    keep = denom > cutoff
    lm = np.zeros_like(d)
    lm[keep] = 2.0 * d[keep] / denom[keep]
    L = v @ lm @ v.conj().T
    return 0.5 * (L + L.conj().T)


def sld_residual(rho, drho, L, cutoff=SLD_CUTOFF):
    """Frobenius norm of ``drho - (L rho + rho L)/2`` with the block outside the
    support of ``rho`` removed."""
    w, v = linalg.eig_hermitian(rho)
    r = v.conj().T @ (drho - 0.5 * (L @ rho + rho @ L)) @ v
    r[(w[:, None] + w[None, :]) <= cutoff] = 0.0
    return float(np.linalg.norm(r))


def sld(params, d_eps=DEFAULT_D_EPS, wrt="epsilon"):
    """Symmetric logarithmic derivative of the family with respect to ``epsilon``
    (``p`` held fixed), or with respect to ``p`` when ``wrt="p"``."""
    rho = make_state(params)
    return sld_from_derivative(rho, state_derivative(params, wrt, d_eps))


def qfi(params, d_eps=DEFAULT_D_EPS):
    eps = params.epsilon
    if not 0.0 < eps < 1.0:
        raise DerivativeSingularity(f"QFI needs 0 < epsilon < 1, got {eps!r}")
    rho = make_state(params)
    d_e = state_derivative(params, "epsilon", d_eps)
    L_e = sld_from_derivative(rho, d_e)
    h_ee = float(np.real(np.trace(rho @ L_e @ L_e)))
    residual = sld_residual(rho, d_e, L_e)

    h_eff = h_ee
    adjusted = False
    # a pure state pins p exactly, so the nuisance correction vanishes there
    if params.p < 1.0 - PURE_TOL:
        d_p = state_derivative(params, "p", d_eps)
        L_p = sld_from_derivative(rho, d_p)
        h_pp = float(np.real(np.trace(rho @ L_p @ L_p)))
        h_ep = float(np.real(np.trace(rho @ (L_e @ L_p + L_p @ L_e)))) / 2.0
        residual = max(residual, sld_residual(rho, d_p, L_p))
        if h_pp > 0.0:
            h_eff = h_ee - h_ep * h_ep / h_pp
            adjusted = True
    return QfiResult(
        epsilon=eps,
        h_analytic=qfi_closed_form(eps),
        h_numeric=h_eff,
        h_fixed_p=h_ee,
        sld=L_e,
        residual=residual,
        nuisance_adjusted=adjusted,
    )
