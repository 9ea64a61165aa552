from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddbh.errors import CutoffSaturationError, InsufficientDataError
from ddbh.gutzwiller import (center_bonds, cutoff_convergence, evolve_gw, gw_options, gw_rhs, initial_gw_state,
                             local_moments, quasi_steady_average, snapshot_grid, zeno_cell, zeno_phase_diagram)
from ddbh.meanfield_gp import evolve
from ddbh.model import LatticeSpec, ModelParams, ScenarioConfig, SourceDrain, build_scenario
from ddbh.observables import ObservableSeries
from ddbh.states import CoherentField, GutzwillerState

from oracles import kerr_hamiltonian, liouvillian, lindblad_steady


def _random_rho(rng, n_sites, dim):
    out = np.empty((n_sites, dim, dim), complex)
    for l in range(n_sites):
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        r = a @ a.conj().T
        out[l] = r / np.trace(r)
    return out


@given(seed=st.integers(0, 2**31), U=st.floats(0, 5), delta=st.floats(-3, 3), periodic=st.booleans())
def test_rhs_preserves_trace_and_hermiticity(seed, U, delta, periodic):
    rng = np.random.default_rng(seed)
    lat = LatticeSpec(5, "periodic" if periodic else "open")
    cfg = build_scenario(lat, ModelParams(1, U, delta), SourceDrain(0.7, 0.9, 0.2))
    d = gw_rhs(GutzwillerState(_random_rho(rng, 5, 6)), cfg)
    np.testing.assert_allclose(np.trace(d, axis1=1, axis2=2), 0, atol=1e-12)
    np.testing.assert_allclose(d, np.conj(np.swapaxes(d, 1, 2)), atol=1e-12)


@given(seed=st.integers(0, 2**31), eta=st.complex_numbers(max_magnitude=2), U=st.floats(0, 5),
       delta=st.floats(-3, 3), g=st.floats(0, 2))
def test_single_site_matches_truncated_master_equation(seed, eta, U, delta, g):
    # with J = 0 every site is an isolated driven Kerr cavity
    rng = np.random.default_rng(seed)
    cfg = build_scenario(LatticeSpec(1), ModelParams(0.0, U, delta), SourceDrain(1.0, g))
    cfg = ScenarioConfig(cfg.lattice, cfg.params, np.array([eta]), np.array([g]))
    rho = _random_rho(rng, 1, 7)
    got = gw_rhs(GutzwillerState(rho), cfg)[0]
    L = liouvillian(kerr_hamiltonian(eta, delta, U, 6), g)
    np.testing.assert_allclose(got.ravel(), L @ rho[0].ravel(), atol=1e-11)


def test_local_moments():
    st_ = GutzwillerState.coherent(np.array([0.5 + 0.2j]), 20)
    m = local_moments(st_.sites[0])
    assert m.phi == pytest.approx(0.5 + 0.2j, abs=1e-10)
    assert m.n == pytest.approx(0.29, abs=1e-10)


def test_linear_limit_follows_mean_field():
    # product coherent states stay coherent when U = 0
    cfg = build_scenario(LatticeSpec(6), ModelParams(1, 0, -1.0), SourceDrain(0.4, 0.8, 0.05))
    run = evolve_gw(GutzwillerState.vacuum(6, 14), cfg, (0, 15), store_phi=True)
    s, _ = evolve(CoherentField.vacuum(6), cfg, (0, 15), store_phi=True)
    np.testing.assert_allclose(run.series.phi, s.phi, atol=1e-6)
    assert run.trace_drift < 1e-8 and run.min_eigenvalue > -1e-8


def test_relaxes_to_single_cavity_steady_state():
    eta, delta, g, U = 0.3, 0.2, 1.0, 1.0
    cfg = build_scenario(LatticeSpec(1), ModelParams(0.0, U, delta), SourceDrain(eta, g))
    run = evolve_gw(GutzwillerState.vacuum(1, 12), cfg, (0, 40))
    phi_ref, n_ref = lindblad_steady(eta, delta, g, U)
    assert run.series.densities[-1, 0] == pytest.approx(n_ref, rel=1e-6)


def test_cutoff_saturation_raises():
    cfg = build_scenario(LatticeSpec(4), ModelParams(1, 20, 0), SourceDrain(2.4, 1.0))
    with pytest.raises(CutoffSaturationError, match="N_c-1=1"):
        evolve_gw(GutzwillerState.vacuum(4, 2), cfg, (0, 20))


def test_initial_states():
    st_, d = initial_gw_state("coherent", 4, 12, density=0.5)
    np.testing.assert_allclose(st_.densities(), 0.5, rtol=1e-6)
    assert "coherent" in d
    assert initial_gw_state("vacuum", 3, 5)[0].densities().sum() == 0
    with pytest.raises(ValueError):
        initial_gw_state("thermal", 3, 5)


def test_center_bonds():
    assert center_bonds(50) == slice(20, 29)
    assert center_bonds(3) == slice(1, 2)


def _series(t, j):
    n = np.ones((t.size, 3))
    jj = np.tile(np.asarray(j)[:, None], (1, 2))
    return ObservableSeries(t, n, jj, np.zeros_like(t), np.zeros_like(t))


def test_quasi_steady_average():
    t = np.linspace(0, 100, 1001)
    q = quasi_steady_average(_series(t, 1 + 0.01 * np.sin(5 * t)), 20)
    assert q.quasi_steady and q.current == pytest.approx([1, 1], abs=1e-2)
    assert not quasi_steady_average(_series(t, 1 + 0.05 * t), 20).quasi_steady
    assert not quasi_steady_average(_series(t, np.sin(t)), 20).quasi_steady
    with pytest.raises(InsufficientDataError):
        quasi_steady_average(_series(t, np.ones_like(t)), 60)


def test_snapshot_grid():
    t = np.linspace(0, 10, 11)
    s = _series(t, t)
    times, j = snapshot_grid(s, 2, 4)
    assert list(times) == [2, 3, 4] and j.shape == (3, 2)
    times, j = snapshot_grid(s, 5, 4)
    assert times.size == 0 and j.shape[0] == 0


def test_zeno_cells_record_failures():
    base = build_scenario(LatticeSpec(4), ModelParams(1, 20, 0), SourceDrain(2.4, 1.0))
    zm = zeno_phase_diagram(base, [1.0], [0.001, 2.4], 10.0, cutoff=2, check_saturation=True)
    cur = zm.current()
    assert np.isfinite(cur[0, 0]) and np.isnan(cur[0, 1])
    assert "CutoffSaturationError" in zm.cells[1].error
    with pytest.raises(ValueError):
        zeno_phase_diagram(base, [], [1.0], 10.0)


def test_cutoff_convergence_weak_drive():
    cfg = build_scenario(LatticeSpec(4), ModelParams(1, 2, 0), SourceDrain(0.2, 1.0))
    ok, change = cutoff_convergence("vacuum", cfg, 20.0, 5.0, cutoff=6, extra=3)
    assert ok and change < 1e-3
