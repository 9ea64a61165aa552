from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddbh.errors import SingularMatrixError
from ddbh.linear_steady import (assemble_coupling_matrix, pi_homogeneous_analytic, resonance_curve,
                                steady_state_linear)
from ddbh.model import LatticeSpec, ModelParams, PhaseImprint, ScenarioConfig, SourceDrain, build_scenario
from ddbh.observables import bond_currents, flux_balance


def _sd(n=100, delta=-2.1, gamma=1.0, F=1.0, gamma_b=0.0):
    return build_scenario(LatticeSpec(n), ModelParams(1, 0, delta), SourceDrain(F, gamma, gamma_b))


def test_matrix_examples():
    cfg = build_scenario(LatticeSpec(3), ModelParams(1, 0, -2), SourceDrain(0, 0))
    np.testing.assert_array_equal(assemble_coupling_matrix(cfg).dense(),
                                  [[0, -1, 0], [-1, 0, -1], [0, -1, 0]])
    cfg = build_scenario(LatticeSpec(2), ModelParams(1, 0, 0), SourceDrain(0, 1))
    np.testing.assert_allclose(np.diag(assemble_coupling_matrix(cfg).dense()), [-2 - 0.5j, -2])
    m = assemble_coupling_matrix(_sd()).dense()
    assert np.count_nonzero(m.imag) == 1 and m[0, 0].imag == -0.5


def test_periodic_corners():
    cfg = build_scenario(LatticeSpec(4, "periodic"), ModelParams(1, 0, 0), PhaseImprint(1, 0, 1))
    m = assemble_coupling_matrix(cfg).dense()
    assert m[0, 3] == -1 and m[3, 0] == -1


def test_zero_drive():
    st_ = steady_state_linear(_sd(F=0.0))
    assert np.all(st_.field.phi == 0) and st_.residual == 0


def test_phase_imprint_matches_closed_form(pi_ring):
    st_ = steady_state_linear(pi_ring)
    np.testing.assert_allclose(st_.field.densities, 4.0, rtol=1e-12)
    # a winding exp(i phase l) carries negative bond current in this convention
    np.testing.assert_allclose(-bond_currents(st_.field, pi_ring), 8.0, rtol=1e-12)
    assert pi_homogeneous_analytic(1, math.pi / 2, -2, 1) == pytest.approx((4.0, 8.0))


def test_closed_form_special_cases():
    assert pi_homogeneous_analytic(1.3, 0.0, 0.4, 0.7)[1] == 0.0
    n, j = pi_homogeneous_analytic(0.8, math.pi / 2, 0.3, 0.5)
    assert j / n == pytest.approx(2.0)
    with pytest.raises(ZeroDivisionError):
        pi_homogeneous_analytic(1, math.pi / 2, -2, 0)


def test_singular_undamped_mode():
    # open 3-chain: eigenvalues of the hopping part are 0, +-sqrt(2)
    cfg = build_scenario(LatticeSpec(3), ModelParams(1, 0, -2.0), SourceDrain(1.0, 0.0))
    with pytest.raises(SingularMatrixError):
        steady_state_linear(cfg)


def test_source_drain_uniform_current_and_balance(sd_chain):
    st_ = steady_state_linear(sd_chain)
    j = bond_currents(st_.field, sd_chain)
    assert j.min() > 0
    np.testing.assert_allclose(j, j.mean(), rtol=0, atol=1e-10 * abs(j.mean()) + 1e-14)
    phi = st_.field.phi
    assert abs(1.0 * abs(phi[0]) ** 2 + 2 * 1.0 * phi[-1].imag) < 1e-10
    assert flux_balance(st_.field, sd_chain) < 1e-8


def test_bulk_loss_makes_current_decay():
    cfg = _sd(n=60, delta=-2.0, gamma_b=0.02)
    j = bond_currents(steady_state_linear(cfg).field, cfg)
    assert np.all(np.diff(j) > 0)  # grows towards the driven edge


def test_resonance_curve_support():
    base = _sd(n=100)
    deltas = np.linspace(-8, 5, 261)
    rc = resonance_curve(base, deltas)
    jb = np.abs(rc.bulk_current)
    peak = np.nanmax(jb)
    outside = (deltas < -4) | (deltas > 0)
    assert np.nanmax(jb[outside]) < 1e-3 * peak
    assert np.nanmax(jb[deltas == 5.0]) < 1e-8


def test_resonance_curve_records_nan_for_singular():
    base = build_scenario(LatticeSpec(3), ModelParams(1, 0, 0), SourceDrain(1.0, 0.0))
    rc = resonance_curve(base, [-2.0, -1.0])
    assert np.isnan(rc.bulk_current[0]) and np.isfinite(rc.bulk_current[1])


def test_gamma_dependence_single_maximum_and_tail():
    gammas = np.logspace(-2, 3, 121)
    j = np.array([bond_currents(steady_state_linear(c).field, c)[0]
                  for c in (_sd(gamma=g) for g in gammas)])
    imax = int(np.argmax(j))
    assert 0.5 <= gammas[imax] <= 2.0
    assert np.all(np.diff(j[:imax + 1]) > 0) and np.all(np.diff(j[imax:]) < 0)
    tail = gammas > 100
    slope = np.polyfit(np.log(gammas[tail]), np.log(j[tail]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)


finite = st.floats(-3, 3, allow_nan=False)


@given(c=st.floats(0.1, 10), theta=st.floats(0, 2 * math.pi), delta=st.floats(-5, 1),
       g=st.floats(0.1, 2))
def test_linearity_and_gauge_covariance(c, theta, delta, g):
    base = build_scenario(LatticeSpec(12), ModelParams(1, 0, delta), SourceDrain(1.0, 1.0, g))
    scaled = ScenarioConfig(base.lattice, base.params, c * np.exp(1j * theta) * base.drive, base.loss)
    a = steady_state_linear(base).field
    b = steady_state_linear(scaled).field
    np.testing.assert_allclose(b.phi, c * np.exp(1j * theta) * a.phi, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(b.densities, c * c * a.densities, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(bond_currents(b, scaled), c * c * bond_currents(a, base),
                               rtol=1e-9, atol=1e-13 * c * c)


@given(delta=st.floats(-5, 1), g=st.floats(0.1, 2), phase=st.sampled_from([k * math.pi / 4 for k in range(8)]))
def test_ring_matches_closed_form(delta, g, phase):
    cfg = build_scenario(LatticeSpec(8, "periodic"), ModelParams(1, 0, delta), PhaseImprint(0.7, phase, g))
    fld = steady_state_linear(cfg).field
    n, j = pi_homogeneous_analytic(0.7, phase, delta, g)
    np.testing.assert_allclose(fld.densities, n, rtol=1e-10)
    np.testing.assert_allclose(-bond_currents(fld, cfg), j, rtol=1e-9, atol=1e-12 * n)
