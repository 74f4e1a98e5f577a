"""Hot numeric kernels: counter-based RNG, Poisson/multinomial count sampling,
and a cyclic Jacobi eigensolver for small Hermitian matrices.

Every kernel has a numba build (``*_nb``) and a pure-numpy build (``*_np``).
The public names (``poisson_batch``, ``multinomial_batch``, ``jacobi_eigh``)
point at one or the other according to :data:`entcrb._accel.USE_NUMBA`.
Both builds perform the same floating-point operations in the same order, so
sampled counts are bit-identical whichever path is active.

Random numbers
--------------
Each draw stream is addressed by a 64-bit key derived from
``(seed, stream, run, lane)`` with SplitMix64 finalisers. The ``c``-th uniform
of a stream is ``mix64(key + (c + 1) * GOLDEN)`` mapped to the open interval
(0, 1) using its top 53 bits. There is no hidden state, so runs can be
generated in any order or in parallel.

Poisson variates use sequential-search inversion below a mean of 30 and
Hormann's PTRS transformed rejection at or above it.
"""

import math

import numpy as np

from . import _accel

RNG_ID = "splitmix64-counter/v1;poisson=inversion(<30)+ptrs;uniform=open53"

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_C_STREAM = np.uint64(0xD1B54A32D192ED03)
_C_LANE = np.uint64(0xAEF17502108EF2D9)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_ONE = np.uint64(1)
_TWO_M53 = 2.0 ** -53

PTRS_THRESHOLD = 30.0


# --------------------------------------------------------------------------
# key derivation (not hot; numpy only)


def mix64(z):
    """SplitMix64 finaliser on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def stream_keys(seed, run, lane, stream=0):
    """Broadcast ``(seed, stream, run, lane)`` to an array of 64-bit stream keys."""
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    run = np.asarray(run, dtype=np.uint64)
    lane = np.asarray(lane, dtype=np.uint64)
    with np.errstate(over="ignore"):
        k = mix64(np.uint64(seed))
        k = mix64(k ^ ((np.uint64(stream) + _ONE) * _C_STREAM))
        k = mix64(k ^ ((run + _ONE) * _GOLDEN))
        k = mix64(k ^ ((lane + _ONE) * _C_LANE))
    return np.asarray(k, dtype=np.uint64)


def uniforms(keys, counter):
    """Uniform variates in (0, 1) for each key at the given counter (numpy)."""
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = mix64(keys + (np.asarray(counter, dtype=np.uint64) + _ONE) * _GOLDEN)
    return ((x >> _S11).astype(np.float64) + 0.5) * _TWO_M53


# --------------------------------------------------------------------------
# numba builds


@_accel.njit
def _mix64_scalar(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@_accel.njit
def _uniform_scalar(key, counter):
    x = _mix64_scalar(key + (counter + _ONE) * _GOLDEN)
    return (np.float64(x >> _S11) + 0.5) * _TWO_M53


@_accel.njit
def _poisson_scalar(lam, key):
    if lam <= 0.0:
        return 0
    if lam < PTRS_THRESHOLD:
        u = _uniform_scalar(key, np.uint64(0))
        p = math.exp(-lam)
        cdf = p
        k = 0
        while u > cdf:
            k += 1
            p = p * (lam / k)
            cdf = cdf + p
            if p == 0.0:
                break
        return k
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    attempt = np.uint64(0)
    while True:
        U = _uniform_scalar(key, attempt + attempt) - 0.5
        V = _uniform_scalar(key, attempt + attempt + _ONE)
        attempt += _ONE
        us = 0.5 - abs(U)
        k = math.floor((2.0 * a / us + b) * U + lam + 0.43)
        if us >= 0.07 and V <= vr:
            return np.int64(k)
        if k < 0 or (us < 0.013 and V > us):
            continue
        lhs = math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b)
        rhs = -lam + k * loglam - math.lgamma(k + 1.0)
        if lhs <= rhs:
            return np.int64(k)


@_accel.njit
def poisson_batch_nb(lam, keys):
    out = np.empty(lam.shape[0], dtype=np.int64)
    for i in range(lam.shape[0]):
        out[i] = _poisson_scalar(lam[i], keys[i])
    return out


@_accel.njit
def multinomial_batch_nb(cum, mean_total, total_keys, cat_keys):
    n = total_keys.shape[0]
    out = np.zeros((n, 4), dtype=np.int64)
    for i in range(n):
        total = _poisson_scalar(mean_total, total_keys[i])
        for j in range(total):
            u = _uniform_scalar(cat_keys[i], np.uint64(j))
            t = 0
            while t < 3 and u >= cum[t]:
                t += 1
            out[i, t] += 1
    return out


@_accel.njit
def jacobi_eigh_nb(a, tol, max_sweeps):
    n = a.shape[0]
    A = a.copy()
    V = np.eye(n, dtype=np.complex128)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += abs(A[i, j]) ** 2
    scale = math.sqrt(scale)
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += abs(A[i, j]) ** 2
        if math.sqrt(off) <= tol * scale:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                r = abs(A[p, q])
                if r == 0.0:
                    continue
                u = A[p, q] / r
                theta = (A[q, q].real - A[p, p].real) / (2.0 * r)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                uc = u.conjugate()
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * uc * akq
                    A[k, q] = s * akp + c * uc * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * u * aqk
                    A[q, k] = s * apk + c * u * aqk
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * uc * vkq
                    V[k, q] = s * vkp + c * uc * vkq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
    w = np.empty(n, dtype=np.float64)
    for i in range(n):
        w[i] = A[i, i].real
    order = np.argsort(w, kind="mergesort")
    return w[order], V[:, order], sweeps


# --------------------------------------------------------------------------
# numpy builds


def poisson_batch_np(lam, keys):
    lam = np.asarray(lam, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.uint64)
    out = np.zeros(lam.shape[0], dtype=np.int64)

    small = np.flatnonzero((lam > 0.0) & (lam < PTRS_THRESHOLD))
    if small.size:
        ls = lam[small]
        u = uniforms(keys[small], 0)
        p = np.exp(-ls)
        cdf = p.copy()
        k = np.zeros(small.size, dtype=np.int64)
        active = u > cdf
        step = 0
        while active.any():
            step += 1
            idx = np.flatnonzero(active)
            p[idx] = p[idx] * (ls[idx] / step)
            cdf[idx] = cdf[idx] + p[idx]
            k[idx] = step
            active[idx] = (p[idx] != 0.0) & (u[idx] > cdf[idx])
        out[small] = k

    big = np.flatnonzero(lam >= PTRS_THRESHOLD)
    if big.size:
        lb = lam[big]
        kb = keys[big]
        slam = np.sqrt(lb)
        loglam = np.log(lb)
        b = 0.931 + 2.53 * slam
        a = -0.059 + 0.02483 * b
        invalpha = 1.1239 + 1.1328 / (b - 3.4)
        vr = 0.9277 - 3.6224 / (b - 2.0)
        result = np.empty(big.size, dtype=np.int64)
        pending = np.arange(big.size)
        attempt = 0
        while pending.size:
            U = uniforms(kb[pending], 2 * attempt) - 0.5
            V = uniforms(kb[pending], 2 * attempt + 1)
            attempt += 1
            ap, bp, lp = a[pending], b[pending], lb[pending]
            us = 0.5 - np.abs(U)
            k = np.floor((2.0 * ap / us + bp) * U + lp + 0.43)
            accept = (us >= 0.07) & (V <= vr[pending])
            reject = ~accept & ((k < 0) | ((us < 0.013) & (V > us)))
            test = np.flatnonzero(~accept & ~reject)
            if test.size:
                kt = k[test]
                lhs = (np.log(V[test]) + np.log(invalpha[pending][test])
                       - np.log(ap[test] / (us[test] * us[test]) + bp[test]))
                lg = np.array([math.lgamma(x + 1.0) for x in kt])
                rhs = -lp[test] + kt * loglam[pending][test] - lg
                accept[test] = lhs <= rhs
            result[pending[accept]] = k[accept].astype(np.int64)
            pending = pending[~accept]
        out[big] = result
    return out


def multinomial_batch_np(cum, mean_total, total_keys, cat_keys):
    cum = np.asarray(cum, dtype=np.float64)
    totals = poisson_batch_np(np.full(len(total_keys), float(mean_total)), total_keys)
    out = np.zeros((len(total_keys), 4), dtype=np.int64)
    for i, total in enumerate(totals):
        if total == 0:
            continue
        u = uniforms(np.full(total, cat_keys[i], dtype=np.uint64), np.arange(total, dtype=np.uint64))
        out[i] = np.bincount(np.searchsorted(cum[:3], u, side="right"), minlength=4)
    return out


def jacobi_eigh_np(a, tol, max_sweeps):
    # same algorithm as the numba build; rotations applied to whole row/column slices
    A = np.array(a, dtype=np.complex128)
    n = A.shape[0]
    V = np.eye(n, dtype=np.complex128)
    scale = math.sqrt(float(np.sum(np.abs(A) ** 2)))
    mask = ~np.eye(n, dtype=bool)
    sweeps = 0
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.abs(A[mask]) ** 2)))
        if off <= tol * scale:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                r = abs(A[p, q])
                if r == 0.0:
                    continue
                u = A[p, q] / r
                theta = (A[q, q].real - A[p, p].real) / (2.0 * r)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                uc = u.conjugate()
                colp, colq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * colp - s * uc * colq
                A[:, q] = s * colp + c * uc * colq
                rowp, rowq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rowp - s * u * rowq
                A[q, :] = s * rowp + c * u * rowq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * uc * vq
                V[:, q] = s * vp + c * uc * vq
                A[p, q] = A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
    w = A.diagonal().real.copy()
    order = np.argsort(w, kind="mergesort")
    return w[order], V[:, order], sweeps


if _accel.USE_NUMBA:
    poisson_batch = poisson_batch_nb
    multinomial_batch = multinomial_batch_nb
    jacobi_eigh = jacobi_eigh_nb
else:
    poisson_batch = poisson_batch_np
    multinomial_batch = multinomial_batch_np
    jacobi_eigh = jacobi_eigh_np

BACKEND = "numba" if _accel.USE_NUMBA else "numpy"
