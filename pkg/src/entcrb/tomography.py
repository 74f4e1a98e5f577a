"""Two-qubit state reconstruction by linear inversion, used to cross-check the
state model.

The canonical set measures every product of ``{H, V, D, L}`` on each arm
(16 projectors, informationally complete). The circular ``L`` projector is
outside what half-wave plates and linear polarizers can do. For that hardware,
:func:`linear_settings` gives the 9 products of ``{H, V, D}``. That set can only
reconstruct states that are real in the H/V basis with no ``HV``/``VH``
coherence, which holds for both state families here (``real_family=True``).
"""

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from . import linalg, states
from .errors import IllPosedSettings, InvalidArgument
from .simulator import sample_count_matrix

TOMO_STREAM = 2
TOMO_HEADER = ["label", "a_re0", "a_im0", "a_re1", "a_im1", "b_re0", "b_im0", "b_re1", "b_im1", "rate"]

_SINGLE = {"H": linalg.KET_H, "V": linalg.KET_V, "D": linalg.KET_D, "L": linalg.KET_L}
_SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_YY = np.kron(_SIGMA_Y, _SIGMA_Y)
_XX = np.kron(_SIGMA_X, _SIGMA_X)


@dataclass(frozen=True)
class TomoSetting:
    projector_a: np.ndarray
    projector_b: np.ndarray
    label: str

    def __post_init__(self):
        linalg.tensor_projector(self.projector_a, self.projector_b)

    @property
    def projector(self):
        return linalg.tensor_projector(self.projector_a, self.projector_b)


def _product_settings(letters):
    return [TomoSetting(_SINGLE[a], _SINGLE[b], a + b) for a, b in itertools.product(letters, repeat=2)]


def canonical_settings():
    """The 16 products of ``{H, V, D, L}`` on each arm."""
    return _product_settings("HVDL")


def linear_settings():
    """The 9 products of ``{H, V, D}``, realizable with linear polarizers."""
    return _product_settings("HVD")


def gram_matrix(settings):
    P = np.array([s.projector for s in settings])
    return np.einsum("aij,bji->ab", P, P).real


def exact_rates(rho, settings):
    return np.array([float(np.real(np.trace(rho @ s.projector))) for s in settings])


def linear_inversion(data, real_family=False):
    """Reconstruct rho from ``(setting, rate)`` pairs through the dual frame.

    Solves ``G c = m`` for the coefficients of ``rho = sum_nu c_nu Pi_nu``,
    where ``G`` is the Gram matrix of the projectors. The result is Hermitian
    and trace-normalized but may have negative eigenvalues when the rates are
    noisy.
    """
    settings = [s for s, _ in data]
    m = np.array([float(r) for _, r in data])
    if np.any(m < 0) or np.any(m > 1):
        raise InvalidArgument("rates must lie in [0, 1]")
    G = gram_matrix(settings)
    needed = 9 if real_family else 16
    if len(settings) < needed or np.linalg.matrix_rank(G, tol=1e-10) < needed:
        raise IllPosedSettings(f"projectors span {np.linalg.matrix_rank(G, tol=1e-10)} dimensions, need {needed}")
    c = np.linalg.lstsq(G, m, rcond=None)[0]
    rho = np.einsum("a,aij->ij", c, np.array([s.projector for s in settings]))
    if real_family:
        # sigma_y (x) sigma_y is orthogonal to every real product projector; fix it from
        # the vanishing HV/VH coherence of the family: <YY> = -<XX>
        rho = rho - 0.25 * np.real(np.trace(rho @ _XX)) * _YY
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.real(np.trace(rho))
    if tr <= 0:
        raise IllPosedSettings("reconstruction has non-positive trace")
    return rho / tr


def is_physical(h, slack=linalg.PSD_SLACK):
    w, _ = linalg.eig_hermitian(h)
    return bool(w[0] >= slack)


def project_to_physical(h):
    """Clip negative eigenvalues to zero and renormalize the trace."""
    h = linalg.check_hermitian(h, tol=1e-10)
    if abs(np.trace(h).real - 1.0) > 1e-6:
        raise InvalidArgument(f"input trace {np.trace(h).real:.9g} is not 1 within 1e-6")
    w, v = linalg.eig_hermitian(h)
    if w[0] >= 0.0:
        return h
    w = np.clip(w, 0.0, None)
    rho = (v * (w / w.sum())) @ v.conj().T
    return 0.5 * (rho + rho.conj().T)


@dataclass(frozen=True)
class ModelComparison:
    fidelity: float
    trace_distance: float
    negativity_gap: float


def compare_to_model(rho_rec, params):
    rho_rec = linalg.check_density(rho_rec)
    model = states.make_state(params)
    if params.p == 1.0:
        fid = linalg.fidelity_with_pure(rho_rec, states.make_pure(params.phi))
    else:
        fid = linalg.fidelity(rho_rec, model)
    return ModelComparison(
        fidelity=min(fid, 1.0),
        trace_distance=linalg.trace_distance(rho_rec, model),
        negativity_gap=abs(linalg.negativity(rho_rec) - states.negativity_closed_form(params)),
    )


def simulate_rates(rho, settings, counts_per_setting, seed):
    """Sampled rates: for each setting, Poisson counts over the four outcomes of
    the basis ``{a, a_perp} x {b, b_perp}``; the rate is the ``(a, b)`` share of the total."""
    rho = linalg.check_density(rho)
    out = []
    for j, s in enumerate(settings):
        a, b = s.projector_a, s.projector_b
        ap, bp = linalg.orthogonal_ket(a), linalg.orthogonal_ket(b)
        kets = [np.kron(a, b), np.kron(ap, b), np.kron(a, bp), np.kron(ap, bp)]
        d = np.clip([np.real(np.vdot(k, rho @ k)) for k in kets], 0.0, None)
        k = sample_count_matrix(d / d.sum(), counts_per_setting, seed, [j], TOMO_STREAM)[0]
        out.append(k[0] / k.sum() if k.sum() else 0.0)
    return np.array(out)


def write_dataset_csv(data, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TOMO_HEADER)
        for s, rate in data:
            amps = []
            for ket in (s.projector_a, s.projector_b):
                for z in ket:
                    amps += [f"{z.real:.9g}", f"{z.imag:.9g}"]
            writer.writerow([s.label, *amps, f"{rate:.9g}"])


def read_dataset_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TOMO_HEADER:
            raise InvalidArgument(f"{path}: expected header {','.join(TOMO_HEADER)}")
        data = []
        for row in reader:
            a = np.array([complex(float(row["a_re0"]), float(row["a_im0"])),
                          complex(float(row["a_re1"]), float(row["a_im1"]))])
            b = np.array([complex(float(row["b_re0"]), float(row["b_im0"])),
                          complex(float(row["b_re1"]), float(row["b_im1"]))])
            # 9-digit CSV amplitudes are renormalized before validation
            a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
            data.append((TomoSetting(a, b, row["label"]), float(row["rate"])))
        return data
