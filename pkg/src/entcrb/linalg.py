"""Exact two-qubit linear algebra in the polarization basis (HH, HV, VH, VV).

Density matrices are plain ``(4, 4)`` complex numpy arrays; kets are
``(2,)`` or ``(4,)`` complex arrays. The second qubit is the fast index, so
``|ab>`` sits at position ``2 * a + b``.
"""

import numpy as np

from . import kernels
from .errors import InvalidArgument

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_SLACK = -1e-10
EIG_TOL = 1e-14
SPECTRUM_FLOOR = 1e-13

KET_H = np.array([1.0, 0.0], dtype=complex)
KET_V = np.array([0.0, 1.0], dtype=complex)
KET_D = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
KET_L = np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2.0)


def linear_polarization(angle):
    """Single-photon ket ``cos(angle)|H> + sin(angle)|V>``."""
    return np.array([np.cos(angle), np.sin(angle)], dtype=complex)


def orthogonal_ket(ket):
    """The ket orthogonal to a normalized qubit ket (``(a, b) -> (-b*, a*)``)."""
    a, b = np.asarray(ket, dtype=complex)
    return np.array([-np.conj(b), np.conj(a)])


def _check_normalized(ket, size, name):
    ket = np.asarray(ket, dtype=complex)
    if ket.shape != (size,):
        raise InvalidArgument(f"{name} must have shape ({size},), got {ket.shape}")
    if not np.all(np.isfinite(ket)):
        raise InvalidArgument(f"{name} has non-finite amplitudes")
    norm2 = float(np.vdot(ket, ket).real)
    if abs(norm2 - 1.0) > NORM_TOL:
        raise InvalidArgument(f"{name} is not normalized (|{name}|^2 = {norm2!r})")
    return ket


def projector(ket):
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def tensor_projector(a, b):
    """``|a><a| (x) |b><b|`` for normalized single-qubit kets ``a`` and ``b``."""
    a = _check_normalized(a, 2, "a")
    b = _check_normalized(b, 2, "b")
    return projector(np.kron(a, b))


def check_hermitian(h, tol=HERMITIAN_TOL, name="matrix"):
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidArgument(f"{name} must be square, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise InvalidArgument(f"{name} has non-finite entries")
    dev = float(np.max(np.abs(h - h.conj().T)))
    if dev > tol:
        raise InvalidArgument(f"{name} is not Hermitian (max deviation {dev:.3e})")
    return h


def check_density(rho, name="rho"):
    """Validate a 4x4 density matrix: Hermitian, unit trace, PSD within slack.

    Returns the matrix as a complex array.
    """
    rho = check_hermitian(rho, name=name)
    if rho.shape != (4, 4):
        raise InvalidArgument(f"{name} must be 4x4, got {rho.shape}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidArgument(f"{name} does not have unit trace (Tr = {tr.real:.15g})")
    w, _ = eig_hermitian(rho)
    if w[0] < PSD_SLACK:
        raise InvalidArgument(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    return rho


def partial_transpose_b(rho):
    """Transpose the second tensor factor: ``((i,j),(k,l)) -> ((i,l),(k,j))``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidArgument(f"expected a 4x4 matrix, got {rho.shape}")
    return rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


def eig_hermitian(h, tol=EIG_TOL, max_sweeps=60):
    """Eigendecomposition of a small Hermitian matrix by cyclic Jacobi rotations.

    Returns ``(w, v)`` with eigenvalues ascending and eigenvectors as the
    columns of ``v``.
    """
    h = check_hermitian(h, tol=1e-10)
    # symmetrize so the rotations see an exactly Hermitian matrix
    h = np.ascontiguousarray(0.5 * (h + h.conj().T))
    w, v, _ = kernels.jacobi_eigh(h, tol, max_sweeps)
    return w, v


def negativity(rho):
    """Twice the summed magnitude of the negative eigenvalues of the partial transpose.

    With this normalization the coherent-mixture family has negativity
    ``p sin(2 phi)`` and a Bell state has negativity 1.
    """
    rho = check_density(rho)
    w, _ = eig_hermitian(partial_transpose_b(rho))
    return float(2.0 * np.sum(np.abs(w[w < 0.0])))


def purity(rho):
    rho = check_density(rho)
    return float(np.real(np.trace(rho @ rho)))


def fidelity_with_pure(rho, psi):
    """``<psi|rho|psi>``."""
    rho = check_density(rho)
    psi = _check_normalized(psi, 4, "psi")
    return float(np.real(np.vdot(psi, rho @ psi)))


def _clip_spectrum(w):
    # eigenvalues at roundoff level are zero; their square roots would not be
    return np.where(w > SPECTRUM_FLOOR * max(w.max(), 1.0), w, 0.0)


def sqrtm_psd(rho):
    w, v = eig_hermitian(rho, tol=EIG_TOL)
    return (v * np.sqrt(_clip_spectrum(w))) @ v.conj().T


def fidelity(rho, sigma):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(sigma) rho sqrt(sigma)))**2``."""
    s = sqrtm_psd(sigma)
    inner = s @ rho @ s
    w, _ = eig_hermitian(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(_clip_spectrum(w))) ** 2)


def trace_distance(rho, sigma):
    w, _ = eig_hermitian(np.asarray(rho) - np.asarray(sigma))
    return float(0.5 * np.sum(np.abs(w)))
