"""Gaussian states: phase conventions, moments, quadrature exactness."""

import math

import numpy as np
import pytest

from logsob import classical, flow, gaussian
from logsob.errors import OutOfRange
from logsob.gaussian import (
    GaussianState,
    QuadratureRule,
    coherent_state,
    evolve_gaussian,
    expectation_observable,
    predicted_sobolev_lower,
)
from logsob.model import ModelParams, PhasePoint

P2 = ModelParams(l=2)


@pytest.fixture(scope="module")
def forced_state():
    traj = classical.integrate_forced(P2, PhasePoint(q=[1.0], p=[1.0]),
                                      6.0, 1e-10)
    path = flow.integrate_F(traj, 6.0, tol=1e-11)
    st0 = coherent_state(PhasePoint(q=[1.0], p=[1.0]), 1e-2)
    return traj, path, st0


def _reference_weyl(x, q, p, hbar):
    # independent route: shift phi_0 by q, modulate by p, apply the
    # -pq/2 Weyl phase
    phi0 = (math.pi * hbar) ** -0.25 * np.exp(-(x - q) ** 2 / (2 * hbar))
    return phi0 * np.exp(1j * (p * x - 0.5 * p * q) / hbar)


class TestCoherentState:
    def test_matches_weyl_translate(self):
        hbar = 1e-2
        x = np.linspace(0.4, 1.6, 41)
        for q, p in ((1.0, 1.0), (0.7, -0.4), (0.0, 2.0)):
            st = coherent_state(PhasePoint(q=[q], p=[p]), hbar)
            ref = _reference_weyl(x, q, p, hbar)
            np.testing.assert_allclose(st.evaluate(x), ref, rtol=0,
                                       atol=1e-13)

    def test_parity_is_exact_reflection(self):
        # phi_{-z}(x) = phi_z(-x) with no conjugation
        hbar = 5e-3
        x = np.linspace(-2.0, 2.0, 101)
        zp = coherent_state(PhasePoint(q=[0.8], p=[0.5]), hbar)
        zm = coherent_state(PhasePoint(q=[-0.8], p=[-0.5]), hbar)
        np.testing.assert_allclose(zm.evaluate(x), zp.evaluate(-x),
                                   rtol=0, atol=1e-14)

    def test_conjugate_flips_momentum(self):
        hbar = 5e-3
        x = np.linspace(-1.0, 2.0, 77)
        st = coherent_state(PhasePoint(q=[0.8], p=[0.5]), hbar)
        flipped = coherent_state(PhasePoint(q=[0.8], p=[-0.5]), hbar)
        np.testing.assert_allclose(np.conj(st.evaluate(x)),
                                   flipped.evaluate(x), rtol=0, atol=1e-14)

    def test_unit_norm(self):
        hbar = 1e-2
        st = coherent_state(PhasePoint(q=[1.0], p=[1.0]), hbar)
        x = np.linspace(-1.0, 3.0, 20001)
        mass = np.trapezoid(np.abs(st.evaluate(x)) ** 2, x)
        assert mass == pytest.approx(1.0, abs=1e-10)

    def test_hbar_validation(self):
        with pytest.raises(ValueError):
            coherent_state(PhasePoint(q=[0.0], p=[0.0]), 0.0)
        with pytest.raises(ValueError):
            coherent_state(PhasePoint(q=[0.0], p=[0.0]), 1.1)


class TestEvolution:
    def test_center_follows_trajectory(self, forced_state):
        # the joint flow integration carries its own copy of the center;
        # it must agree with the standalone trajectory solve
        traj, path, st0 = forced_state
        for t in (0.5, 2.0, 5.5):
            st = evolve_gaussian(st0, traj, path, t)
            y, v = traj.state_at(t)
            assert st.q == pytest.approx(y, abs=1e-8)
            assert st.p == pytest.approx(v, abs=1e-8)

    def test_symplectic_pair_invariant(self, forced_state):
        # Im(conj(Q) P) = det F = 1 keeps the state normalized
        traj, path, st0 = forced_state
        for t in np.linspace(0.0, 6.0, 25):
            st = evolve_gaussian(st0, traj, path, float(t))
            assert (st.Q.conjugate() * st.P).imag == pytest.approx(
                1.0, abs=1e-8)
            assert st.Theta.imag > 0.0

    def test_unit_norm_preserved(self, forced_state):
        traj, path, st0 = forced_state
        st = evolve_gaussian(st0, traj, path, 4.0)
        spread = math.sqrt(st.hbar / (2.0 * st.Theta.imag))
        x = st.q + np.linspace(-12, 12, 40001) * spread
        mass = np.trapezoid(np.abs(st.evaluate(x)) ** 2, x)
        assert mass == pytest.approx(1.0, abs=1e-9)

    def test_width_angle_continuity(self, forced_state):
        traj, path, st0 = forced_state
        ts = np.linspace(0.01, 6.0, 600)
        args = np.array([evolve_gaussian(st0, traj, path, float(t)).arg_Q
                         for t in ts])
        assert np.max(np.abs(np.diff(args))) < 0.5
        for t, a in ((ts[100], args[100]), (ts[480], args[480])):
            st = evolve_gaussian(st0, traj, path, float(t))
            assert np.exp(1j * a) == pytest.approx(st.Q / abs(st.Q),
                                                   abs=1e-9)

    def test_free_spreading_law(self):
        # resting orbit at the origin freezes the curvature to zero, so
        # the width obeys the free law Theta_t = i / (1 + i t)
        traj = classical.integrate_forced(P2, PhasePoint(q=[0.0], p=[0.0]),
                                          4.0, 1e-10, forcing=False)
        path = flow.integrate_F(traj, 4.0, tol=1e-12)
        st0 = coherent_state(PhasePoint(q=[0.0], p=[0.0]), 1e-2)
        for t in (0.5, 1.0, 3.0):
            st = evolve_gaussian(st0, traj, path, t)
            assert st.Q == pytest.approx(1.0 + 1j * t, abs=1e-11)
            assert st.Theta == pytest.approx(1j / (1.0 + 1j * t), abs=1e-11)

    def test_out_of_range(self, forced_state):
        traj, path, st0 = forced_state
        with pytest.raises(OutOfRange):
            evolve_gaussian(st0, traj, path, 6.5)


class TestExpectations:
    def test_constant_and_center(self, forced_state):
        traj, path, st0 = forced_state
        st = evolve_gaussian(st0, traj, path, 3.0)
        assert expectation_observable(lambda q, p: np.ones_like(q), st) \
            == pytest.approx(1.0, rel=1e-14)
        assert expectation_observable(lambda q, p: q, st) == pytest.approx(
            st.q, abs=1e-13)
        assert expectation_observable(lambda q, p: p, st) == pytest.approx(
            st.p, abs=1e-13)

    def test_second_moments_match_flow_blocks(self, forced_state):
        traj, path, st0 = forced_state
        st = evolve_gaussian(st0, traj, path, 4.0)
        h = st.hbar
        F = st.F
        var_q = expectation_observable(lambda q, p: q * q, st) - st.q ** 2
        var_p = expectation_observable(lambda q, p: p * p, st) - st.p ** 2
        cov_qp = expectation_observable(lambda q, p: q * p, st) \
            - st.q * st.p
        assert var_q == pytest.approx(0.5 * h * abs(st.Q) ** 2, rel=1e-12)
        assert var_p == pytest.approx(0.5 * h * abs(st.P) ** 2, rel=1e-12)
        assert cov_qp == pytest.approx(
            0.5 * h * (F[0, 0] * F[1, 0] + F[0, 1] * F[1, 1]), rel=1e-10,
            abs=1e-14)

    def test_width_variance_identity(self, forced_state):
        # position variance written through the width parameter
        traj, path, st0 = forced_state
        st = evolve_gaussian(st0, traj, path, 2.5)
        var_q = expectation_observable(lambda q, p: q * q, st) - st.q ** 2
        assert var_q == pytest.approx(st.hbar / (2.0 * st.Theta.imag),
                                      rel=1e-12)

    def test_monomials_exact_at_low_order(self, forced_state):
        # degree <= 5 polynomials are integrated exactly once the rule
        # order passes half the degree; closed forms follow from the
        # Gaussian moment identities with cov = (hbar/2) F F^T
        traj, path, st0 = forced_state
        st = evolve_gaussian(st0, traj, path, 3.7)
        h = st.hbar
        F = st.F
        cov = 0.5 * h * (F @ F.T)   # (p, q) block order
        Spp, Sqq, Sqp = cov[0, 0], cov[1, 1], cov[0, 1]
        mq, mp = st.q, st.p
        closed = {
            (3, 0): mq ** 3 + 3 * mq * Sqq,
            (0, 3): mp ** 3 + 3 * mp * Spp,
            (2, 1): mq ** 2 * mp + mp * Sqq + 2 * mq * Sqp,
            (1, 2): mp ** 2 * mq + mq * Spp + 2 * mp * Sqp,
            (4, 0): mq ** 4 + 6 * mq ** 2 * Sqq + 3 * Sqq ** 2,
            (5, 0): mq ** 5 + 10 * mq ** 3 * Sqq + 15 * mq * Sqq ** 2,
        }
        for (i, j), want in closed.items():
            for order in (8, 24):
                got = expectation_observable(
                    lambda q, p, i=i, j=j: q ** i * p ** j, st,
                    QuadratureRule(order=order))
                assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_energy_remainder_scales_with_hbar(self):
        # <E> - E(z_t) = b(hbar, t); for this quadratic-in-zeta case the
        # remainder is linear in hbar at fixed t
        traj = classical.integrate_forced(P2, PhasePoint(q=[1.0], p=[1.0]),
                                          3.0, 1e-10)
        path = flow.integrate_F(traj, 3.0, tol=1e-11)

        def remainder(hbar):
            st = evolve_gaussian(
                coherent_state(PhasePoint(q=[1.0], p=[1.0]), hbar),
                traj, path, 3.0)
            val = expectation_observable(
                lambda q, p: 0.5 * p ** 2 + 0.25 * q ** 4, st)
            y, v = traj.state_at(3.0)
            return val - (0.5 * v ** 2 + 0.25 * y ** 4)

        b2, b3, b4 = remainder(1e-2), remainder(1e-3), remainder(1e-4)
        # the quartic tail adds an O(hbar) relative correction, largest
        # for the coarsest pair
        assert b2 / b3 == pytest.approx(10.0, rel=0.1)
        assert b3 / b4 == pytest.approx(10.0, rel=1e-2)

    def test_rule_validation(self, forced_state):
        with pytest.raises(ValueError):
            QuadratureRule(order=0)


class TestPredictedLower:
    def test_r0_is_constant_below_one(self):
        fit = {"C1": 0.2, "Cprime": {"0": 1.0, "1": 0.6}}
        val = predicted_sobolev_lower(10.0, 0, fit)
        assert val == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-14)
        assert val <= 1.0

    def test_r1_log_scaling(self):
        fit = {"C1": 0.25, "Cprime": {"0": 1.0, "1": 0.5}}
        t1, t2 = 2.0, math.e ** 2 - 2.0 + math.e ** 2  # arbitrary pair
        v1 = predicted_sobolev_lower(t1, 1, fit)
        v2 = predicted_sobolev_lower(t2, 1, fit)
        assert v2 / v1 == pytest.approx(
            math.log(2.0 + t2) / math.log(2.0 + t1), rel=1e-14)

    def test_preconditions(self):
        fit = {"C1": 0.2, "Cprime": {"0": 1.0}}
        with pytest.raises(ValueError):
            predicted_sobolev_lower(1.0, 0, fit)
        with pytest.raises(ValueError):
            predicted_sobolev_lower(3.0, -1, fit)
