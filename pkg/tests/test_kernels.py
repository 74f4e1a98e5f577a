import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entcrb import kernels

from conftest import random_hermitian


def keys(n, seed=7, stream=0):
    return kernels.stream_keys(seed, np.arange(n), 0, stream)


class TestKeys:
    def test_broadcast_shape(self):
        k = kernels.stream_keys(1, np.arange(3)[:, None], np.arange(4)[None, :])
        assert k.shape == (3, 4) and k.dtype == np.uint64
        assert len(np.unique(k)) == 12

    def test_streams_differ(self):
        assert not np.array_equal(keys(8, stream=0), keys(8, stream=1))

    def test_seed_range(self):
        with pytest.raises(ValueError):
            kernels.stream_keys(-1, 0, 0)
        kernels.stream_keys(2**64 - 1, 0, 0)

    def test_uniforms_open_interval(self):
        u = kernels.uniforms(keys(1)[0], np.arange(100_000, dtype=np.uint64))
        assert 0.0 < u.min() and u.max() < 1.0
        assert u.mean() == pytest.approx(0.5, abs=0.005)

    def test_mix64_known_value(self):
        # SplitMix64 finaliser of the first counter step from state 0
        assert int(kernels.mix64(np.uint64(0x9E3779B97F4A7C15))) == 0xE220A8397B1DCDAF


class TestBackendsAgree:
    @pytest.mark.parametrize("lam", [0.0, 0.3, 5.0, 29.9, 30.0, 250.0, 1e4])
    def test_poisson_bit_identical(self, lam):
        k = keys(2000)
        lam_arr = np.full(len(k), lam)
        a = kernels.poisson_batch_nb(lam_arr, k)
        b = kernels.poisson_batch_np(lam_arr, k)
        assert np.array_equal(a, b)

    def test_multinomial_bit_identical(self):
        cum = np.cumsum([0.1, 0.4, 0.3, 0.2])[:3]
        tk = kernels.stream_keys(3, np.arange(200), 4)
        ck = kernels.stream_keys(3, np.arange(200), 5)
        assert np.array_equal(kernels.multinomial_batch_nb(cum, 300.0, tk, ck),
                              kernels.multinomial_batch_np(cum, 300.0, tk, ck))

    def test_jacobi_agree(self, rng):
        for _ in range(20):
            h = random_hermitian(rng)
            w1, v1, _ = kernels.jacobi_eigh_nb(h, 1e-14, 60)
            w2, v2, _ = kernels.jacobi_eigh_np(h, 1e-14, 60)
            assert np.allclose(w1, w2, atol=1e-13)
            assert np.allclose(np.abs(v1.conj().T @ v2), np.eye(4), atol=1e-9)

    def test_env_flag_selects_numpy(self):
        env = dict(os.environ, ENTCRB_DISABLE_NUMBA="1")
        out = subprocess.run([sys.executable, "-c", "from entcrb import kernels; print(kernels.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "numpy"


class TestPoissonStatistics:
    @pytest.mark.parametrize("lam", [2.5, 29.0, 31.0, 1e4])
    def test_mean_and_variance(self, lam):
        n = 100_000
        x = kernels.poisson_batch(np.full(n, lam), keys(n, seed=11))
        tol = 5 * math.sqrt(lam / n)
        assert x.mean() == pytest.approx(lam, abs=tol)
        assert x.var(ddof=1) / lam == pytest.approx(1.0, abs=0.03)

    def test_small_mean_pmf(self):
        n = 200_000
        x = kernels.poisson_batch(np.full(n, 1.5), keys(n, seed=5))
        freq = np.bincount(x, minlength=6)[:6] / n
        pmf = [math.exp(-1.5) * 1.5 ** j / math.factorial(j) for j in range(6)]
        assert freq == pytest.approx(pmf, abs=0.004)

    def test_multinomial_total_is_poisson(self):
        cum = np.array([0.25, 0.5, 0.75])
        n = 20_000
        out = kernels.multinomial_batch(cum, 100.0, kernels.stream_keys(1, np.arange(n), 4),
                                        kernels.stream_keys(1, np.arange(n), 5))
        total = out.sum(axis=1)
        assert total.mean() == pytest.approx(100.0, abs=0.5)
        assert total.var(ddof=1) / 100.0 == pytest.approx(1.0, abs=0.05)
        assert out.mean(axis=0) == pytest.approx([25] * 4, abs=0.3)


@given(st.floats(0.0, 500.0), st.integers(0, 2**63))
def test_poisson_backends_agree_everywhere(lam, seed):
    k = kernels.stream_keys(seed, np.arange(16), 0)
    lam_arr = np.full(16, lam)
    assert np.array_equal(kernels.poisson_batch_nb(lam_arr, k), kernels.poisson_batch_np(lam_arr, k))


def test_benchmark_smoke(capsys):
    import importlib.util

    path = os.path.join(os.path.dirname(os.path.dirname(__file__)), "benchmarks", "bench_kernels.py")
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    bench.main(["--draws", "1000", "--windows", "50", "--matrices", "20", "--repeat", "1"])
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6 and all(line.endswith("True") for line in lines[1:])
