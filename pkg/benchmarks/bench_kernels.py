"""Compare the numba and pure-numpy kernel builds.

Times Poisson sampling, multinomial sampling and the Jacobi eigensolver on
both paths, checks that sampled counts are identical, and optionally times a
full campaign run end to end with each backend selected through
``ENTCRB_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --draws 200000 --end-to-end
"""

import argparse
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from entcrb import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_poisson(n, repeat):
    rows = []
    keys = kernels.stream_keys(1, np.arange(n), 0)
    for lam in (5.0, 250.0, 1e4):
        lam_arr = np.full(n, lam)
        kernels.poisson_batch_nb(lam_arr[:8], keys[:8])  # compile outside the timing
        t_nb, a = best_of(lambda: kernels.poisson_batch_nb(lam_arr, keys), repeat)
        t_np, b = best_of(lambda: kernels.poisson_batch_np(lam_arr, keys), repeat)
        rows.append((f"poisson lam={lam:g} n={n}", t_nb, t_np, np.array_equal(a, b)))
    return rows


def bench_multinomial(n, repeat):
    cum = np.cumsum([0.1, 0.4, 0.4, 0.1])[:3]
    tk = kernels.stream_keys(2, np.arange(n), 4)
    ck = kernels.stream_keys(2, np.arange(n), 5)
    kernels.multinomial_batch_nb(cum, 10.0, tk[:4], ck[:4])
    t_nb, a = best_of(lambda: kernels.multinomial_batch_nb(cum, 1000.0, tk, ck), repeat)
    t_np, b = best_of(lambda: kernels.multinomial_batch_np(cum, 1000.0, tk, ck), repeat)
    return [(f"multinomial mean=1000 n={n}", t_nb, t_np, np.array_equal(a, b))]


def bench_jacobi(n, repeat):
    rng = np.random.default_rng(0)
    mats = []
    for _ in range(n):
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        mats.append(np.ascontiguousarray(0.5 * (g + g.conj().T)))
    kernels.jacobi_eigh_nb(mats[0], 1e-14, 60)

    def run(fn):
        return np.array([fn(m, 1e-14, 60)[0] for m in mats])

    t_nb, a = best_of(lambda: run(kernels.jacobi_eigh_nb), repeat)
    t_np, b = best_of(lambda: run(kernels.jacobi_eigh_np), repeat)
    return [(f"jacobi 4x4 x{n}", t_nb, t_np, bool(np.allclose(a, b, atol=1e-12)))]


def end_to_end():
    rows = []
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    config = os.path.join(root, "configs", "reference_campaign.json")
    outputs = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        with tempfile.TemporaryDirectory() as tmp:
            env = dict(os.environ, ENTCRB_DISABLE_NUMBA=flag)
            cmd = [sys.executable, "-m", "entcrb", "run", "--config", config, "--out", tmp, "--runs", "1000",
                   "--tomography"]
            t0 = time.perf_counter()
            subprocess.run(cmd, env=env, check=True, stdout=subprocess.DEVNULL)
            elapsed = time.perf_counter() - t0
            with open(os.path.join(tmp, "saturation_table.csv"), "rb") as fh:
                outputs[label] = fh.read()
            rows.append((label, elapsed))
    return rows, outputs["numba"] == outputs["numpy"]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--draws", type=int, default=100_000, help="Poisson draws per timing")
    parser.add_argument("--windows", type=int, default=5_000, help="multinomial windows per timing")
    parser.add_argument("--matrices", type=int, default=2_000, help="4x4 eigenproblems per timing")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--end-to-end", action="store_true", help="also time a 7-config campaign per backend")
    args = parser.parse_args(argv)

    rows = bench_poisson(args.draws, args.repeat)
    rows += bench_multinomial(args.windows, args.repeat)
    rows += bench_jacobi(args.matrices, args.repeat)
    print(f"{'kernel':34s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}  identical")
    for name, t_nb, t_np, same in rows:
        print(f"{name:34s} {1e3 * t_nb:11.2f} {1e3 * t_np:11.2f} {t_np / t_nb:8.1f}  {same}")
    if args.end_to_end:
        timings, same = end_to_end()
        for label, elapsed in timings:
            print(f"campaign (7 configs, M=1000, tomography) with {label}: {elapsed:.2f} s")
        print(f"campaign outputs identical across backends: {same}")


if __name__ == "__main__":
    main()
