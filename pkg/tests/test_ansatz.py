"""Gradient and consistency checks for all trial-wavefunction kinds.

Every analytic derivative (parameter log-derivatives, angle gradient of
log |psi|^2, and the per-site first/second angle derivatives entering the
local energy) is verified against central finite differences.
"""

import numpy as np
import pytest

from rotor_tvmc.ansatz import (
    AnsatzError,
    make_ansatz,
    log_psi_periodicity_check,
    random_alpha,
    zero_final_kernel,
)
from rotor_tvmc.ansatz.activations import (
    d2_poly_log_I0_of_square,
    d_poly_log_I0_of_square,
    poly_I1_over_I0,
    poly_d2_log_I0,
    poly_log_I0,
    poly_log_I0_of_square,
)
from rotor_tvmc.lattice import build_lattice

FD_EPS = 1e-6


def _cases():
    chain4 = build_lattice((4,), (True,))
    open3 = build_lattice((3,), (False,))
    square = build_lattice((3, 3), (True, True))
    mixed = build_lattice((3, 4), (True, False))
    return [
        ("jastrow", chain4, {}),
        ("jastrow", open3, {}),
        ("rbm", chain4, {"n_hidden": 6}),
        ("rbm", chain4, {"convolutional": True}),
        ("rbm", square, {"convolutional": True}),
        ("cnn", chain4, {"depth": 2, "n_modes": 2}),
        ("cnn", square, {"depth": 3, "n_modes": 1}),
        ("cnn", mixed, {"depth": 2, "n_modes": 2}),
    ]


def _random_state(kind, lattice, hyper, seed=11, scale=0.1):
    state = make_ansatz(kind, lattice, **hyper)
    return state.with_alpha(random_alpha(state, np.random.default_rng(seed), scale))


def _fd_param_grad(state, theta):
    base = state.alpha
    grad = np.empty(state.n_params, dtype=np.complex128)
    for p in range(state.n_params):
        step = np.zeros_like(base)
        step[p] = FD_EPS
        plus = state.with_alpha(base + step).log_psi(theta)[0]
        minus = state.with_alpha(base - step).log_psi(theta)[0]
        d_re = (plus - minus) / (2 * FD_EPS)
        step[p] = 1j * FD_EPS
        plus = state.with_alpha(base + step).log_psi(theta)[0]
        minus = state.with_alpha(base - step).log_psi(theta)[0]
        d_im = (plus - minus) / (2 * FD_EPS)
        # holomorphic check: d/d(i a) = i d/da
        assert abs(d_im - 1j * d_re) < 1e-5 * max(1.0, abs(d_re))
        grad[p] = d_re
    return grad


@pytest.mark.parametrize("kind,lattice,hyper", _cases(),
                         ids=lambda v: str(v) if isinstance(v, str) else None)
class TestGradients:
    def test_parameter_derivatives(self, kind, lattice, hyper):
        state = _random_state(kind, lattice, hyper)
        rng = np.random.default_rng(5)
        theta = rng.uniform(-np.pi, np.pi, size=(1, lattice.n_sites))
        analytic = state.log_derivatives(theta)[0]
        fd = _fd_param_grad(state, theta)
        scale = max(1.0, np.max(np.abs(fd)))
        assert np.max(np.abs(analytic - fd)) / scale < 1e-6

    def test_angle_first_derivative(self, kind, lattice, hyper):
        state = _random_state(kind, lattice, hyper)
        rng = np.random.default_rng(6)
        theta = rng.uniform(-np.pi, np.pi, size=(1, lattice.n_sites))
        _, d1, _ = state.angle_derivatives(theta)
        for k in range(lattice.n_sites):
            step = np.zeros_like(theta)
            step[0, k] = FD_EPS
            fd = (state.log_psi(theta + step)[0] - state.log_psi(theta - step)[0]) / (2 * FD_EPS)
            assert abs(d1[0, k] - fd) < 1e-6 * max(1.0, abs(fd))

    def test_angle_second_derivative(self, kind, lattice, hyper):
        state = _random_state(kind, lattice, hyper)
        rng = np.random.default_rng(7)
        theta = rng.uniform(-np.pi, np.pi, size=(1, lattice.n_sites))
        _, _, d2 = state.angle_derivatives(theta)
        h = 1e-4
        for k in range(lattice.n_sites):
            step = np.zeros_like(theta)
            step[0, k] = h
            fd = (
                state.log_psi(theta + step)[0]
                - 2 * state.log_psi(theta)[0]
                + state.log_psi(theta - step)[0]
            ) / h ** 2
            assert abs(d2[0, k] - fd) < 1e-4 * max(1.0, abs(fd))

    def test_grad_log_prob(self, kind, lattice, hyper):
        state = _random_state(kind, lattice, hyper)
        rng = np.random.default_rng(8)
        theta = rng.uniform(-np.pi, np.pi, size=(1, lattice.n_sites))
        grad = state.grad_log_prob(theta)
        for k in range(lattice.n_sites):
            step = np.zeros_like(theta)
            step[0, k] = FD_EPS
            fd = (state.log_prob(theta + step)[0] - state.log_prob(theta - step)[0]) / (2 * FD_EPS)
            assert abs(grad[0, k] - fd) < 1e-6 * max(1.0, abs(fd))

    def test_periodicity(self, kind, lattice, hyper):
        state = _random_state(kind, lattice, hyper)
        rng = np.random.default_rng(9)
        theta = rng.uniform(-np.pi, np.pi, size=lattice.n_sites)
        for k in range(lattice.n_sites):
            assert log_psi_periodicity_check(state, theta, k)

    def test_local_energy_finite(self, kind, lattice, hyper):
        state = _random_state(kind, lattice, hyper)
        rng = np.random.default_rng(10)
        theta = rng.uniform(-np.pi, np.pi, size=(5, lattice.n_sites))
        e = state.local_energy(theta, g=4.0, J=1.0)
        assert np.all(np.isfinite(e))


class TestLocalEnergy:
    def test_uniform_state_energy_is_potential_only(self):
        # lnpsi = 0: kinetic part vanishes, E_L = -J sum cos(dtheta)
        lat = build_lattice((4,), (True,))
        state = make_ansatz("jastrow", lat)
        rng = np.random.default_rng(0)
        theta = rng.uniform(-np.pi, np.pi, size=(10, 4))
        bk, bl = lat.bonds[:, 0], lat.bonds[:, 1]
        expected = -np.sum(np.cos(theta[:, bk] - theta[:, bl]), axis=1)
        assert np.allclose(state.local_energy(theta, g=3.0, J=1.0), expected)

    def test_coupling_validation(self):
        lat = build_lattice((3,), (True,))
        state = make_ansatz("jastrow", lat)
        theta = np.zeros((1, 3))
        with pytest.raises(ValueError):
            state.local_energy(theta, g=-1.0, J=1.0)


class TestFactory:
    def test_unknown_kind(self):
        lat = build_lattice((3,), (True,))
        with pytest.raises(AnsatzError):
            make_ansatz("mps", lat)

    def test_parameter_length_validated(self):
        lat = build_lattice((3,), (True,))
        state = make_ansatz("jastrow", lat)
        with pytest.raises(AnsatzError):
            state.with_alpha(np.zeros(99))

    def test_blocks_layout_roundtrip(self):
        lat = build_lattice((4,), (True,))
        state = _random_state("rbm", lat, {"n_hidden": 3})
        blocks = state.blocks()
        flat = np.concatenate([blocks[name].ravel() for name, _ in state.layout])
        assert np.array_equal(flat, state.alpha)

    def test_conv_rbm_requires_periodic(self):
        lat = build_lattice((4,), (False,))
        with pytest.raises(AnsatzError):
            make_ansatz("rbm", lat, convolutional=True)

    def test_cnn_kernel_must_be_odd(self):
        lat = build_lattice((4, 4), (True, True))
        with pytest.raises(AnsatzError):
            make_ansatz("cnn", lat, kernel_shape=(2, 2))


class TestUniformCnn:
    def test_zero_final_kernel_is_uniform(self):
        lat = build_lattice((3, 3), (True, True))
        state = make_ansatz("cnn", lat, depth=2, n_modes=2)
        state = state.with_alpha(random_alpha(state, np.random.default_rng(0), 0.1))
        state = zero_final_kernel(state)
        rng = np.random.default_rng(1)
        theta = rng.uniform(-np.pi, np.pi, size=(20, 9))
        assert np.allclose(state.log_psi(theta), state.log_psi(theta)[0])


class TestActivations:
    def test_log_i0_taylor(self):
        z = np.linspace(0, 0.5, 11)
        assert np.allclose(poly_log_I0(z), z ** 2 / 4 - z ** 4 / 64 + z ** 6 / 576)

    def test_ratio_is_derivative(self):
        z = np.linspace(0.01, 0.5, 20)
        h = 1e-6
        fd = (poly_log_I0(z + h) - poly_log_I0(z - h)) / (2 * h)
        assert np.allclose(poly_I1_over_I0(z), fd, atol=1e-8)

    def test_second_derivative(self):
        z = np.linspace(0.01, 0.5, 20)
        h = 1e-4
        fd = (poly_log_I0(z + h) - 2 * poly_log_I0(z) + poly_log_I0(z - h)) / h ** 2
        assert np.allclose(poly_d2_log_I0(z), fd, atol=1e-6)

    def test_square_argument_form_consistent(self):
        z = np.linspace(0, 0.7, 15)
        assert np.allclose(poly_log_I0_of_square(z ** 2), poly_log_I0(z))

    def test_square_form_derivatives(self):
        s = np.linspace(0.01, 0.4, 20)
        h = 1e-6
        fd = (poly_log_I0_of_square(s + h) - poly_log_I0_of_square(s - h)) / (2 * h)
        assert np.allclose(d_poly_log_I0_of_square(s), fd, atol=1e-8)
        h = 1e-4
        fd2 = (
            poly_log_I0_of_square(s + h)
            - 2 * poly_log_I0_of_square(s)
            + poly_log_I0_of_square(s - h)
        ) / h ** 2
        assert np.allclose(d2_poly_log_I0_of_square(s), fd2, atol=1e-6)
