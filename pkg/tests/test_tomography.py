import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entcrb import linalg, states, tomography
from entcrb.errors import IllPosedSettings, InvalidArgument
from entcrb.states import Model, StateParams

from conftest import DEG, random_density


def exact_data(rho, settings=None):
    settings = settings or tomography.canonical_settings()
    return list(zip(settings, tomography.exact_rates(rho, settings)))


class TestSettings:
    def test_canonical(self):
        s = tomography.canonical_settings()
        assert len(s) == 16 and len({x.label for x in s}) == 16
        assert all(np.trace(x.projector).real == pytest.approx(1.0) for x in s)

    def test_gram_conditioning(self):
        # frozen direct computation; the set is complete but not especially well conditioned
        G = tomography.gram_matrix(tomography.canonical_settings())
        assert np.linalg.matrix_rank(G) == 16
        assert np.linalg.cond(G) == pytest.approx(108.2408, abs=1e-3)

    def test_gram_oracle(self):
        # Tr[(A1 x B1)(A2 x B2)] = |<a1|a2>|^2 |<b1|b2>|^2
        s = tomography.canonical_settings()
        G = tomography.gram_matrix(s)
        for i in (0, 5, 11):
            for j in (3, 7, 15):
                o = abs(np.vdot(s[i].projector_a, s[j].projector_a)) ** 2 * abs(np.vdot(s[i].projector_b, s[j].projector_b)) ** 2
                assert G[i, j] == pytest.approx(o, abs=1e-14)


class TestLinearInversion:
    def test_bell(self):
        bell = states.make_state(StateParams.coherent(math.pi / 4, 1.0))
        assert np.allclose(tomography.linear_inversion(exact_data(bell)), bell, atol=1e-10)

    def test_maximally_mixed(self):
        assert np.allclose(tomography.linear_inversion(exact_data(np.eye(4) / 4)), np.eye(4) / 4, atol=1e-12)

    def test_reported_configuration_negativity(self):
        rho = states.make_state(StateParams.coherent(20 * DEG, 0.88))
        assert linalg.negativity(tomography.linear_inversion(exact_data(rho))) == pytest.approx(0.565653, abs=5e-7)
        assert linalg.negativity(tomography.linear_inversion(exact_data(rho))) == pytest.approx(
            0.88 * math.sin(40 * DEG), abs=1e-9)

    def test_real_family_mode(self):
        for model in Model:
            rho = states.make_state(StateParams(model, 0.4, 0.7))
            rec = tomography.linear_inversion(exact_data(rho, tomography.linear_settings()), real_family=True)
            assert np.allclose(rec, rho, atol=1e-10)

    def test_incomplete_set(self):
        with pytest.raises(IllPosedSettings):
            tomography.linear_inversion(exact_data(np.eye(4) / 4, tomography.linear_settings()))

    def test_bad_rates(self):
        data = exact_data(np.eye(4) / 4)
        data[0] = (data[0][0], 1.5)
        with pytest.raises(InvalidArgument):
            tomography.linear_inversion(data)

    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_general_state(self, seed):
        rho = random_density(np.random.default_rng(seed))
        assert np.allclose(tomography.linear_inversion(exact_data(rho)), rho, atol=1e-10)


class TestPhysicality:
    def test_physical_unchanged(self):
        rho = states.make_state(StateParams.coherent(0.3, 0.8))
        assert np.allclose(tomography.project_to_physical(rho), rho, atol=1e-12)

    def test_clip(self):
        out = tomography.project_to_physical(np.diag([0.6, 0.5, 0.0, -0.1]).astype(complex))
        assert np.allclose(out, np.diag([0.6, 0.5, 0, 0]) / 1.1, atol=1e-12)
        assert tomography.is_physical(out)

    @given(st.integers(0, 2**32 - 1))
    def test_output_psd(self, seed):
        rng = np.random.default_rng(seed)
        h = random_density(rng) + 0.2 * np.diag(rng.normal(size=4))
        h = h - np.eye(4) * (np.trace(h).real - 1) / 4
        w = np.linalg.eigvalsh(tomography.project_to_physical(h))
        assert w.min() >= -1e-12


class TestCompare:
    def test_identical(self):
        params = StateParams.coherent(0.3, 0.8)
        cmp = tomography.compare_to_model(states.make_state(params), params)
        assert cmp.fidelity == pytest.approx(1.0, abs=1e-9)
        assert cmp.trace_distance == pytest.approx(0.0, abs=1e-12)
        assert cmp.negativity_gap == pytest.approx(0.0, abs=1e-12)

    def test_mixed_vs_bell(self):
        cmp = tomography.compare_to_model(np.eye(4) / 4, StateParams.coherent(math.pi / 4, 1.0))
        assert cmp.trace_distance == pytest.approx(0.75)
        assert cmp.fidelity == pytest.approx(0.25)

    def test_sampled(self):
        params = StateParams.coherent(45 * DEG, 0.97)
        settings = tomography.canonical_settings()
        rates = tomography.simulate_rates(states.make_state(params), settings, 1e5, seed=4)
        rho = tomography.project_to_physical(tomography.linear_inversion(list(zip(settings, rates))))
        assert tomography.compare_to_model(rho, params).fidelity > 0.99


def test_dataset_csv_round_trip(tmp_path):
    data = exact_data(states.make_state(StateParams.coherent(0.3, 0.8)))
    tomography.write_dataset_csv(data, tmp_path / "d.csv")
    back = tomography.read_dataset_csv(tmp_path / "d.csv")
    assert [s.label for s, _ in back] == [s.label for s, _ in data]
    assert np.allclose(tomography.linear_inversion(back), tomography.linear_inversion(data), atol=1e-8)
