"""Site-factorized density-matrix (Gutzwiller) dynamics.

Each site carries ``c[l, n, m] = <n|rho_l|m>`` in a Fock space truncated at
``N_c`` levels.  Neighbouring sites couple only through the effective drive

    eta_l = F_l - J (2 phi_l + phi_{l-1} + phi_{l+1}),   phi_l = tr(a rho_l),

so each site evolves under ``H_l = -delta n + U/2 n(n-1) + eta_l a^dag + eta_l^* a``
and the Lindblad loss ``gamma_l D[a]``.  Coherences are gathered once per
right-hand-side evaluation, after which sites are independent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .errors import CutoffSaturationError, InsufficientDataError, SolverError
from .integrate import IntegratorOptions, propagate, sample_times
from .model import ScenarioConfig
from .observables import ObservableSeries, SeriesRecorder
from .states import GutzwillerState

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 10
SATURATION_LIMIT = 1e-4
POSITIVITY_STRIDE = 100
POSITIVITY_TOL = -1e-8


class LocalMoments(NamedTuple):
    phi: complex
    n: float


def local_moments(site: np.ndarray) -> LocalMoments:
    site = np.asarray(site)
    k = np.arange(site.shape[0])
    phi = complex(np.sum(np.sqrt(k[1:]) * np.diagonal(site, offset=-1)))
    return LocalMoments(phi, float(np.sum(k * np.diagonal(site).real)))


@numba.njit(cache=True, fastmath=False)
def _rhs_kernel(c, out, F, g, diag_h, nsum, sq, J, periodic):
    N, Nc, _ = c.shape
    phi = np.empty(N, np.complex128)
    for l in range(N):
        s = 0j
        for k in range(1, Nc):
            s += sq[k] * c[l, k, k - 1]
        phi[l] = s
    for l in range(N):
        nb = 2.0 * phi[l]
        if l > 0:
            nb += phi[l - 1]
        elif periodic:
            nb += phi[N - 1]
        if l < N - 1:
            nb += phi[l + 1]
        elif periodic:
            nb += phi[0]
        eta = F[l] - J * nb
        etc = eta.conjugate()
        gl = g[l]
        cl = c[l]
        ol = out[l]
        # h = [H, rho] - i gamma/2 {n, rho} + i gamma a rho a^dag, then multiply by -i
        for a in range(Nc):
            for b in range(Nc):
                ol[a, b] = (diag_h[a, b] - 0.5j * gl * nsum[a, b]) * cl[a, b]
        for a in range(1, Nc):
            ea = eta * sq[a]
            eca = etc * sq[a]
            for b in range(Nc):
                ol[a, b] += ea * cl[a - 1, b]
                ol[a - 1, b] += eca * cl[a, b]
        for a in range(Nc):
            for b in range(1, Nc):
                ol[a, b - 1] -= eta * sq[b] * cl[a, b]
                ol[a, b] -= etc * sq[b] * cl[a, b - 1]
        if gl != 0.0:
            for a in range(Nc - 1):
                for b in range(Nc - 1):
                    ol[a, b] += 1j * gl * sq[a + 1] * sq[b + 1] * cl[a + 1, b + 1]
        for a in range(Nc):
            for b in range(Nc):
                v = ol[a, b]
                ol[a, b] = complex(v.imag, -v.real)


class _Tables:
    """Cutoff-dependent constants of the local Hamiltonian."""

    def __init__(self, cutoff: int, U: float, delta: float):
        n = np.arange(cutoff, dtype=float)
        e = -delta * n + 0.5 * U * n * (n - 1)
        self.diag_h = (e[:, None] - e[None, :]).astype(complex)
        self.nsum = n[:, None] + n[None, :]
        self.sq = np.sqrt(n)


def _make_rhs(config: ScenarioConfig, cutoff: int):
    tab = _Tables(cutoff, config.U, config.delta)
    F = np.ascontiguousarray(config.drive, dtype=complex)
    g = np.ascontiguousarray(config.loss, dtype=float)
    J = float(config.J)
    periodic = bool(config.lattice.periodic)
    shape = (config.n_x, cutoff, cutoff)
    out = np.empty(shape, complex)

    def f(t, y):
        _rhs_kernel(y.reshape(shape), out, F, g, tab.diag_h, tab.nsum, tab.sq, J, periodic)
        return out.copy()

    return f


def gw_rhs(state: GutzwillerState, config: ScenarioConfig) -> np.ndarray:
    """Time derivative of every site matrix, shape ``(N, N_c, N_c)``."""
    if state.n_x != config.n_x:
        raise ValueError(f"state has {state.n_x} sites, config expects {config.n_x}")
    c = np.ascontiguousarray(state.sites, dtype=complex)
    return _make_rhs(config, state.cutoff)(state.time, c)


# --- evolution -----------------------------------------------------------------

def gw_options(**overrides) -> IntegratorOptions:
    """Defaults for the Gutzwiller tier: 8(5,3) Dormand-Prince, rtol 1e-8."""
    return IntegratorOptions(**{"rtol": 1e-8, "atol": 1e-10, "method": "dop853", **overrides})


@dataclass
class GutzwillerRun:
    series: ObservableSeries
    final: GutzwillerState
    trace_drift: float
    min_eigenvalue: float
    max_top_occupation: float
    snapshots: np.ndarray | None = None


def evolve_gw(initial: GutzwillerState, config: ScenarioConfig, t_span, options: IntegratorOptions | None = None,
              saturation_limit: float = SATURATION_LIMIT, check_saturation: bool = True,
              store_phi: bool = False, initial_descriptor: str = "custom") -> GutzwillerRun:
    """Propagate a Gutzwiller state.

    Raises :class:`CutoffSaturationError` as soon as the summed top-level
    population exceeds ``saturation_limit``.  Trace drift is measured and
    logged but never corrected.
    """
    options = options or gw_options()
    c0 = np.ascontiguousarray(initial.sites, dtype=complex)
    if initial.n_x != config.n_x:
        raise ValueError(f"state has {initial.n_x} sites, config expects {config.n_x}")
    cutoff = initial.cutoff
    f = _make_rhs(config, cutoff)
    rec = SeriesRecorder(config, store_phi=store_phi)
    stats = {"drift": 0.0, "min_eig": float("inf"), "top": 0.0, "count": 0}

    def sample(t, y):
        st = GutzwillerState(y, t)
        phi = st.coherences()
        rec.add(t, phi, st.densities())
        drift = float(np.abs(st.traces() - 1.0).max())
        stats["drift"] = max(stats["drift"], drift)
        top = st.top_occupation()
        stats["top"] = max(stats["top"], top)
        if stats["count"] % POSITIVITY_STRIDE == 0:
            lam = st.min_eigenvalue()
            stats["min_eig"] = min(stats["min_eig"], lam)
            if lam < POSITIVITY_TOL:
                log.warning("site density matrix eigenvalue %.3e at t=%.4g", lam, t)
        stats["count"] += 1
        if check_saturation and top > saturation_limit:
            raise CutoffSaturationError(
                f"top Fock level N_c-1={cutoff - 1} holds population {top:.3e} > {saturation_limit:g} "
                f"at t={t:.6g}; increase the cutoff")

    times = sample_times(t_span[0], t_span[1], options.sample_dt)
    final = propagate(f, c0, times, options, sample)
    final_state = GutzwillerState(final, float(times[-1]))
    stats["min_eig"] = min(stats["min_eig"], final_state.min_eigenvalue())
    if stats["drift"] > 1e-9:
        log.info("max trace drift %.3e over t in [%g, %g]", stats["drift"], *t_span)
    meta = {"config_hash": config.config_hash(), "tier": "gutzwiller", "cutoff": cutoff,
            "initial": initial_descriptor, "integrator": options.describe(),
            "trace_drift": stats["drift"]}
    return GutzwillerRun(rec.series(meta), final_state, stats["drift"], stats["min_eig"], stats["top"])


# --- quasi-steady analysis -----------------------------------------------------

QS_DRIFT = 0.01
QS_VARIANCE = 0.05


@dataclass
class QuasiSteadyAverage:
    current: np.ndarray
    density: np.ndarray
    current_var: np.ndarray
    density_var: np.ndarray
    quasi_steady: bool
    drift: float
    rel_variance: float


def quasi_steady_average(series: ObservableSeries, window: float, sites: slice | None = None,
                         drift_tol: float = QS_DRIFT, var_tol: float = QS_VARIANCE) -> QuasiSteadyAverage:
    """Mean and variance over the last ``window`` of a trajectory.

    Quasi-steady when the mean current and density in the selected bulk
    region change by less than ``drift_tol`` (relative) between the last two
    windows and the windowed variance stays below ``var_tol`` times the
    squared mean.  A vanishing mean current is never quasi-steady.
    """
    t = series.times
    if t.size < 4 or t[-1] - t[0] < 2 * window:
        raise InsufficientDataError(f"series spans {t[-1] - t[0] if t.size else 0:.3g}, "
                                    f"needs two windows of {window}")
    last = t >= t[-1] - window
    prev = (t >= t[-1] - 2 * window) & ~last
    jl, jp = series.currents[last], series.currents[prev]
    nl, np_ = series.densities[last], series.densities[prev]
    sel = sites if sites is not None else slice(None)
    j_mean = jl.mean(axis=0)
    n_mean = nl.mean(axis=0)
    j_var = jl.var(axis=0)
    n_var = nl.var(axis=0)
    jb, jb_prev = jl[:, sel].mean(), jp[:, sel].mean()
    nb, nb_prev = nl[:, sel].mean(), np_[:, sel].mean()
    eps = 1e-300
    drift = max(abs(jb - jb_prev) / max(abs(jb), eps), abs(nb - nb_prev) / max(abs(nb), eps))
    jvar_b = float(jl[:, sel].mean(axis=1).var())
    nvar_b = float(nl[:, sel].mean(axis=1).var())
    relvar = max(jvar_b / max(jb * jb, eps), nvar_b / max(nb * nb, eps))
    constant = jvar_b == 0 and nvar_b == 0 and jb == jb_prev and nb == nb_prev
    flag = bool(constant or (drift < drift_tol and relvar < var_tol))
    return QuasiSteadyAverage(j_mean, n_mean, j_var, n_var, flag, float(drift), float(relvar))


def center_bonds(n_x: int, width: int | None = None) -> slice:
    """Bonds around the middle of the chain (0-based)."""
    nb = n_x - 1
    w = width or max(1, nb // 5)
    lo = max(0, nb // 2 - w // 2)
    return slice(lo, min(nb, lo + w))


# --- sweeps and exports -----------------------------------------------------

def initial_gw_state(kind: str, n_x: int, cutoff: int, density: float = 1.0, phase: float = -math.pi / 2):
    """``vacuum`` or ``coherent`` product state; returns (state, descriptor)."""
    if kind == "vacuum":
        return GutzwillerState.vacuum(n_x, cutoff), "vacuum"
    if kind == "coherent":
        l = np.arange(1, n_x + 1)
        alphas = math.sqrt(density) * np.exp(1j * phase * l)
        return GutzwillerState.coherent(alphas, cutoff), f"coherent(n0={density:g},phase={phase:.6g})"
    raise ValueError(f"unknown initial state {kind!r}")


@dataclass
class ZenoCell:
    gamma: float
    F: float
    mean_current: float
    variance: float
    quasi_steady: bool
    error: str | None = None


@dataclass
class ZenoMap:
    gammas: np.ndarray
    Fs: np.ndarray
    cells: list[ZenoCell] = field(default_factory=list)

    def current(self) -> np.ndarray:
        out = np.full((self.gammas.size, self.Fs.size), np.nan)
        for c in self.cells:
            i = int(np.flatnonzero(self.gammas == c.gamma)[0])
            k = int(np.flatnonzero(self.Fs == c.F)[0])
            out[i, k] = c.mean_current
        return out


def zeno_cell(template: ScenarioConfig, gamma: float, F: float, t_final: float, window: float | None = None,
              cutoff: int = DEFAULT_CUTOFF, initial: str = "vacuum", options: IntegratorOptions | None = None,
              check_saturation: bool = False) -> ZenoCell:
    """One point of the (gamma, F) map; averages the central bonds over the last window."""
    window = window if window is not None else 0.2 * t_final
    try:
        cfg = template.with_params(gamma=gamma, F=F)
        st, desc = initial_gw_state(initial, cfg.n_x, cutoff)
        run = evolve_gw(st, cfg, (0.0, t_final), options, check_saturation=check_saturation,
                        initial_descriptor=desc)
        sel = center_bonds(cfg.n_x)
        avg = quasi_steady_average(run.series, window, sites=sel)
        jc = run.series.window(t_final - window).currents[:, sel].mean(axis=1)
        return ZenoCell(gamma, F, float(jc.mean()), float(jc.var()), avg.quasi_steady)
    except (SolverError, ValueError) as exc:
        return ZenoCell(gamma, F, float("nan"), float("nan"), False, f"{type(exc).__name__}: {exc}")


def zeno_phase_diagram(template: ScenarioConfig, gammas, Fs, t_final: float, window: float | None = None,
                       **kwargs) -> ZenoMap:
    """Average central current over a (gamma, F) grid; failing cells are recorded."""
    gammas = np.asarray(gammas, dtype=float)
    Fs = np.asarray(Fs, dtype=float)
    if gammas.size == 0 or Fs.size == 0:
        raise ValueError("gamma and F grids must be non-empty")
    zm = ZenoMap(gammas, Fs)
    for g in gammas:
        for F in Fs:
            zm.cells.append(zeno_cell(template, float(g), float(F), t_final, window, **kwargs))
    return zm


def snapshot_grid(series: ObservableSeries, t0: float, t1: float) -> tuple[np.ndarray, np.ndarray]:
    """Space-time grid of bond currents: ``(times, currents[time, bond])``."""
    w = series.window(t0, t1) if t1 >= t0 else series.window(1.0, 0.0)
    return w.times, w.currents


def cutoff_convergence(initial_kind: str, config: ScenarioConfig, t_final: float, window: float,
                       cutoff: int = DEFAULT_CUTOFF, extra: int = 4, options: IntegratorOptions | None = None,
                       tol: float = 1e-3) -> tuple[bool, float]:
    """Rerun at ``cutoff + extra`` and compare windowed densities and currents."""
    res = []
    for nc in (cutoff, cutoff + extra):
        st, desc = initial_gw_state(initial_kind, config.n_x, nc)
        run = evolve_gw(st, config, (0.0, t_final), options, check_saturation=False, initial_descriptor=desc)
        w = run.series.window(t_final - window)
        res.append(np.concatenate([w.densities.mean(axis=0), w.currents.mean(axis=0)]))
    scale = max(np.abs(res[1]).max(), 1e-300)
    change = float(np.abs(res[0] - res[1]).max() / scale)
    return change < tol, change
