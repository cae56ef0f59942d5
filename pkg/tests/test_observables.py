import numpy as np
import pytest

from rotor_tvmc.ansatz import make_ansatz, random_alpha
from rotor_tvmc.lattice import build_lattice
from rotor_tvmc.observables import (
    bootstrap_sigma,
    circular_variance_mean,
    fidelity,
    half_fidelity_time,
    loop_circulation,
    magnetization,
    potential_energy_density,
    vorticity,
)


class TestPotentialEnergy:
    def test_aligned_configuration(self):
        lat = build_lattice((4,), (True,))
        samples = np.zeros((10, 4))
        e, sigma = potential_energy_density(samples, lat, J=1.0)
        # 4 bonds, all cos = 1, density -J * 4 / 4
        assert e == pytest.approx(-1.0)
        assert sigma == pytest.approx(0.0)

    def test_staggered_configuration(self):
        lat = build_lattice((4,), (True,))
        samples = np.tile([0.0, np.pi, 0.0, np.pi], (5, 1))
        e, _ = potential_energy_density(samples, lat, J=2.0)
        assert e == pytest.approx(2.0)


class TestMagnetization:
    def test_aligned(self):
        samples = np.full((20, 6), 0.3)
        m, mx, my, sigma = magnetization(samples)
        assert m == pytest.approx(1.0)
        assert mx == pytest.approx(np.cos(0.3))
        assert my == pytest.approx(np.sin(0.3))

    def test_antipodal_pair_components_vanish(self):
        # |.| inside the average vs outside: components cancel, M does not
        samples = np.array([[0.0, 0.0], [np.pi, np.pi]])
        m, mx, my, _ = magnetization(samples)
        assert abs(mx) < 1e-12 and abs(my) < 1e-12
        assert m == pytest.approx(1.0)

    def test_uniform_samples_small_m(self):
        rng = np.random.default_rng(0)
        samples = rng.uniform(-np.pi, np.pi, size=(4000, 64))
        m, _, _, _ = magnetization(samples)
        assert m < 0.2


class TestCircularVariance:
    def test_concentrated(self):
        rng = np.random.default_rng(1)
        samples = 0.05 * rng.standard_normal((2000, 3))
        assert circular_variance_mean(samples) < 0.01


class TestVorticity:
    def test_uniform_field_has_no_vorticity(self):
        lat = build_lattice((4, 4), (True, True))
        samples = np.full((4, 16), 0.7)
        v, sigma = vorticity(samples, lat, 1)
        assert v == pytest.approx(0.0)

    def test_single_vortex_loop(self):
        # four sites winding once around the circle: circulation 2 pi / ell^2
        theta = np.array([0.0, np.pi / 2, np.pi, -np.pi / 2])
        assert loop_circulation(theta, [0, 1, 2, 3], 1) == pytest.approx(2 * np.pi)

    def test_requires_2d(self):
        lat = build_lattice((5,), (True,))
        with pytest.raises(ValueError):
            vorticity(np.zeros((3, 5)), lat, 1)


class TestBootstrap:
    def test_scaling_with_sample_size(self):
        rng = np.random.default_rng(2)
        sigmas = []
        for n in (400, 1600, 6400):
            values = rng.standard_normal(n)
            sigmas.append(bootstrap_sigma(values, rng=np.random.default_rng(0)))
        # sigma ~ n^(-1/2): each quadrupling halves the error bar
        assert sigmas[0] / sigmas[1] == pytest.approx(2.0, rel=0.25)
        assert sigmas[1] / sigmas[2] == pytest.approx(2.0, rel=0.25)

    def test_chain_block_shape(self):
        rng = np.random.default_rng(3)
        values = rng.standard_normal((8, 250))
        sigma = bootstrap_sigma(values, rng=np.random.default_rng(0))
        assert 0 < sigma < 0.1

    def test_deterministic_default_rng(self):
        values = np.arange(100, dtype=float)
        assert bootstrap_sigma(values) == bootstrap_sigma(values)


class TestFidelity:
    def _states(self):
        lat = build_lattice((3,), (True,))
        state = make_ansatz("jastrow", lat)
        a = state.with_alpha(random_alpha(state, np.random.default_rng(4), 0.2))
        b = a.with_alpha(a.alpha + 0.05)
        return a, b

    def test_self_overlap_is_one(self):
        a, _ = self._states()
        rng = np.random.default_rng(5)
        samples = rng.uniform(-np.pi, np.pi, size=(2000, 3))
        result = fidelity(a, a, samples, samples)
        assert result.value == pytest.approx(1.0)
        assert not result.overlap_lost

    def test_distinct_states_below_one(self):
        # purely imaginary pair couplings change only the phase of psi, so
        # |psi|^2 stays uniform and uniform draws ARE the Born distribution
        lat = build_lattice((3,), (True,))
        base = make_ansatz("jastrow", lat)
        a = base.with_alpha(np.zeros(3, dtype=complex))
        b = base.with_alpha(np.array([0.6j, 0.0, 0.0]))
        rng = np.random.default_rng(6)
        s0 = rng.uniform(-np.pi, np.pi, size=(4000, 3))
        st = rng.uniform(-np.pi, np.pi, size=(4000, 3))
        result = fidelity(a, b, s0, st)
        assert 0.0 < result.value < 0.99
        assert result.sigma >= 0.0

    def test_value_clamped_to_unit_interval(self):
        a, b = self._states()
        rng = np.random.default_rng(7)
        s = rng.uniform(-np.pi, np.pi, size=(50, 3))
        result = fidelity(a, b, s, s)
        assert 0.0 <= result.value <= 1.0


class TestHalfFidelityTime:
    def test_linear_interpolation(self):
        times = np.array([0.0, 1.0, 2.0])
        fids = np.array([1.0, 0.6, 0.4])
        assert half_fidelity_time(times, fids) == pytest.approx(1.5)

    def test_no_crossing(self):
        times = np.array([0.0, 1.0])
        fids = np.array([1.0, 0.8])
        assert half_fidelity_time(times, fids) is None

    def test_rejects_bad_start(self):
        with pytest.raises(ValueError):
            half_fidelity_time(np.array([0.0, 1.0]), np.array([0.4, 0.3]))
