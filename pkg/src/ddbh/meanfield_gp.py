"""Coherent-field (Gross-Pitaevskii-like) mean-field dynamics.

Equation of motion for the local coherences, hbar = 1:

    i dphi_l/dt = -delta phi_l - J sum_<l,j> phi_j + U |phi_l|^2 phi_l
                  + F_l - i gamma_l/2 phi_l

with ``sum_<l,j> phi_j = 2 phi_l + phi_{l-1} + phi_{l+1}`` on the y-invariant
lattice.

Besides time evolution this module holds the homogeneous phase-imprint
cubic, its interaction-shifted resonance, the bulk plane-wave solution of the
source-drain chain and adiabatic parameter ramps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import InsufficientDataError, NoSteadyStateError, ScenarioError
from .integrate import IntegratorOptions, propagate, sample_times
from .model import ScenarioConfig, Y_COORDINATION
from .observables import ObservableSeries, SeriesRecorder, bond_currents_from_phi
from .states import CoherentField

STEADY_TOL = 1e-8
STEADY_WINDOW = 50.0


def _hopping_sum(phi: np.ndarray, periodic: bool) -> np.ndarray:
    s = Y_COORDINATION * phi
    if periodic:
        s = s + np.roll(phi, 1) + np.roll(phi, -1)
    else:
        s = s.copy()
        s[1:] += phi[:-1]
        s[:-1] += phi[1:]
    return s


def _rhs(phi, J, U, delta, drive, loss, periodic):
    h = (-delta - 0.5j * loss) * phi - J * _hopping_sum(phi, periodic) + drive
    if U:
        h += U * (phi.real ** 2 + phi.imag ** 2) * phi
    return -1j * h


def gp_rhs(state, config: ScenarioConfig) -> np.ndarray:
    """Time derivative ``dphi/dt`` of a coherent field."""
    phi = state.phi if isinstance(state, CoherentField) else np.asarray(state, dtype=complex)
    if phi.shape != (config.n_x,):
        raise ValueError(f"field has shape {phi.shape}, config expects ({config.n_x},)")
    return _rhs(phi, config.J, config.U, config.delta, config.drive, config.loss,
                config.lattice.periodic)


# --- time evolution --------------------------------------------------------

def gp_options(**overrides) -> IntegratorOptions:
    return IntegratorOptions(**{"rtol": 1e-9, "atol": 1e-12, "method": "dopri5", **overrides})


def _run(phi0, config, times, options, store_phi, param_at=None, metadata=None):
    rec = SeriesRecorder(config, store_phi=store_phi)
    periodic = config.lattice.periodic

    if param_at is None:
        J, U, d, F, g = config.J, config.U, config.delta, config.drive, config.loss
        f = lambda t, y: _rhs(y, J, U, d, F, g, periodic)

        def sample(t, y):
            rec.add(t, y, np.abs(y) ** 2, float(np.abs(f(t, y)).max()))
    else:
        def f(t, y):
            c = param_at(t)
            return _rhs(y, c.J, c.U, c.delta, c.drive, c.loss, periodic)

        def sample(t, y):
            rec.add(t, y, np.abs(y) ** 2, float(np.abs(f(t, y)).max()), config=param_at(t))

    final = propagate(f, np.asarray(phi0, dtype=complex), times, options, sample)
    return rec.series(metadata), CoherentField(final, float(times[-1]))


def evolve(initial: CoherentField, config: ScenarioConfig, t_span, options: IntegratorOptions | None = None,
           store_phi: bool = False, initial_descriptor: str = "custom"):
    """Propagate a coherent field; returns ``(series, final_field)``.

    Samples are taken every ``options.sample_dt``; ``series.rhs_norm`` holds
    ``max_l |dphi_l/dt|`` at each sample.
    """
    options = options or gp_options()
    phi0 = initial.phi if isinstance(initial, CoherentField) else np.asarray(initial, complex)
    if not np.all(np.isfinite(phi0)):
        raise ValueError("initial field contains non-finite entries")
    t0, t1 = t_span
    meta = {"config_hash": config.config_hash(), "tier": "gp", "initial": initial_descriptor,
            "integrator": options.describe()}
    return _run(phi0, config, sample_times(t0, t1, options.sample_dt), options, store_phi,
                metadata=meta)


# --- steady-state detection ------------------------------------------------

BRANCHES = ("unique", "lower", "middle", "upper")


@dataclass
class SteadyStateReport:
    field: CoherentField
    converged: bool
    rhs_norm: float
    branch_label: str = "unique"
    oscillating: bool = False
    density_drift: float = float("nan")
    current_std: float = float("nan")


def detect_steady(series: ObservableSeries, window: float = STEADY_WINDOW, tol: float = STEADY_TOL,
                  final: CoherentField | None = None) -> SteadyStateReport:
    """Classify the last ``window`` of a trajectory.

    Converged: ``max |dphi/dt| < tol`` over the window and the windowed mean
    density drifts by less than ``tol`` (relative) against the previous
    window.  Oscillating: not converged, the total current fluctuates with a
    standard deviation above ``10 tol`` and its windowed mean is stable.
    """
    t = series.times
    if t.size < 4 or t[-1] - t[0] < 2 * window:
        raise InsufficientDataError(f"series spans {t[-1] - t[0] if t.size else 0:.3g}, "
                                    f"needs at least two windows of {window}")
    last = t >= t[-1] - window
    prev = (t >= t[-1] - 2 * window) & ~last
    ntot = series.total_n
    m_last, m_prev = ntot[last].mean(), ntot[prev].mean()
    drift = abs(m_last - m_prev) / max(abs(m_last), 1e-300)
    if series.rhs_norm is not None:
        rhs_norm = float(series.rhs_norm[last].max())
    else:
        dt = np.diff(t[last])
        dn = np.abs(np.diff(series.densities[last], axis=0)) / dt[:, None]
        rhs_norm = float(dn.max()) if dn.size else 0.0
    converged = bool(rhs_norm < tol and drift < tol)
    jtot = series.currents.sum(axis=1)
    s_last = float(jtot[last].std())
    mean_shift = abs(jtot[last].mean() - jtot[prev].mean())
    oscillating = bool(not converged and s_last > 10 * tol and mean_shift < 0.1 * s_last + tol)
    if final is None:
        final = CoherentField(series.phi[-1], float(t[-1])) if series.phi is not None else None
    return SteadyStateReport(final, converged, rhs_norm, "unique", oscillating, drift, s_last)


def steady_state_gp(config: ScenarioConfig, initial: CoherentField | None = None, t_max: float = 5000.0,
                    window: float = STEADY_WINDOW, tol: float = STEADY_TOL,
                    options: IntegratorOptions | None = None) -> SteadyStateReport:
    """Evolve in chunks of two windows until stationary or ``t_max``."""
    options = options or gp_options()
    state = initial or CoherentField.vacuum(config.n_x)
    t = 0.0
    chunk = 2 * window
    report = None
    while t < t_max - 1e-9:
        t_end = min(t + chunk, t_max)
        series, state = evolve(state, config, (t, t_end), options)
        if t_end - t >= 2 * window:
            report = detect_steady(series, window, tol, final=state)
            if report.converged:
                break
        t = t_end
    if report is None:
        raise InsufficientDataError("t_max shorter than two steady-state windows")
    report.field = state
    report.branch_label = _branch_label(config, state)
    return report


def _branch_label(config: ScenarioConfig, state: CoherentField) -> str:
    prof = config.profile
    if prof is None or prof.kind != "phase_imprint" or not config.homogeneous or config.U <= 0:
        return "unique"
    roots = pi_density_roots(prof.F, config.delta, prof.gamma_b, config.U, config.J, prof.phase)
    if len(roots) < 3:
        return "unique"
    n = float(np.mean(state.densities))
    return roots[int(np.argmin([abs(r.density - n) for r in roots]))].branch


# --- homogeneous phase-imprint states --------------------------------------

class DensityRoot(NamedTuple):
    density: float
    branch: str
    stability: str | None = None


def _cubic_real_roots(b: float, c: float, d: float) -> list[float]:
    """Real roots of x^3 + b x^2 + c x + d from the depressed form."""
    p = c - b * b / 3.0
    q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    disc = -(4.0 * p ** 3 + 27.0 * q ** 2)
    if disc > 0:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * r)))
        theta = math.acos(arg) / 3.0
        roots = [r * math.cos(theta - 2.0 * math.pi * k / 3.0) + shift for k in range(3)]
    elif disc == 0 and p == 0:
        roots = [shift]
    elif disc == 0:
        roots = [3.0 * q / p + shift, -1.5 * q / p + shift]
    else:
        s = math.sqrt(q * q / 4.0 + p ** 3 / 27.0)
        roots = [float(np.cbrt(-q / 2.0 + s) + np.cbrt(-q / 2.0 - s)) + shift]
    return sorted(roots)


def pi_density_roots(F: float, delta: float, gamma_b: float, U: float, J: float = 1.0,
                     phase: float = math.pi / 2) -> list[DensityRoot]:
    """All homogeneous densities solving ``n[(eps + n U)^2 + gamma_b^2/4] = F^2``.

    ``eps = -2J(1 + cos phase) - delta``; at ``phase = pi/2`` this is the
    familiar ``-2J - delta``.  Roots are ascending and polished by Newton
    iteration on the cubic in ``m = U n``, which stays well scaled as U -> 0.
    """
    if U <= 0:
        raise ValueError("the interacting cubic needs U > 0")
    eps = -2.0 * J * (1.0 + math.cos(phase)) - delta
    g2 = gamma_b ** 2 / 4.0
    e2 = eps * eps + g2
    # m^3 + 2 eps m^2 + (eps^2 + g^2/4) m - F^2 U = 0
    coeff = (2.0 * eps, e2, -F * F * U)
    f = lambda m: ((m + coeff[0]) * m + coeff[1]) * m + coeff[2]
    df = lambda m: (3.0 * m + 2.0 * coeff[0]) * m + coeff[1]
    polished = []
    for m in _cubic_real_roots(*coeff):
        for _ in range(60):
            d = df(m)
            if d == 0:
                break
            step = f(m) / d
            m -= step
            if abs(step) <= 1e-16 * max(abs(m), 1e-300):
                break
        polished.append(m)
    scale = max(abs(coeff[2]), 1e-300)
    dens = sorted({round(m / U, 15): m / U for m in polished
                   if m >= 0 and abs(f(m)) <= 1e-9 * max(scale, abs(coeff[1] * m))}.values())
    if len(dens) == 3:
        labels = ("lower", "middle", "upper")
    else:
        labels = ("unique",) * len(dens)
    return [DensityRoot(float(n), lab) for n, lab in zip(dens, labels)]


def resonance_shift(U: float, F: float, gamma_b: float, J: float = 1.0) -> float:
    """Detuning of maximal phase-imprint current at ``phase = pi/2``."""
    if gamma_b == 0:
        raise ZeroDivisionError("resonance shift diverges without bulk loss")
    return -2.0 * J + 4.0 * U * F ** 2 / gamma_b ** 2


def bulk_ansatz(phase: float, delta: float, U: float, J: float = 1.0) -> tuple[float, float]:
    """Uniform bulk density and current of a source-drain plane wave."""
    if U <= 0:
        raise ValueError("bulk plane wave needs U > 0")
    n = (delta + 2.0 * J * (1.0 + math.cos(phase))) / U
    if n < 0:
        raise NoSteadyStateError(f"bulk density {n:.4g} < 0: no plane wave with phase {phase:.4g}")
    return n, 2.0 * J * n * math.sin(phase)


# --- adiabatic ramps ----------------------------------------------------------

RAMP_PARAMETERS = {"delta": "delta", "F": "F", "gamma": "gamma", "U": "U"}


@dataclass
class RampSchedule:
    """Linear ramp of one parameter at ``rate`` (value per unit time).

    A zero rate holds the start value for ``duration``.
    """

    parameter: str
    start: float
    end: float
    rate: float
    window: float = STEADY_WINDOW
    tol: float = 1e-4
    duration: float | None = None

    def total_time(self) -> float:
        if self.rate == 0:
            if self.duration is None:
                raise ScenarioError("a zero-rate ramp needs an explicit duration")
            return self.duration
        return abs(self.end - self.start) / abs(self.rate)

    def value_at(self, t: float) -> float:
        if self.rate == 0:
            return self.start
        s = min(max(t / self.total_time(), 0.0), 1.0)
        return self.start + s * (self.end - self.start)


@dataclass
class RampResult:
    parameter: np.ndarray
    density: np.ndarray
    current: np.ndarray
    phase: np.ndarray
    converged: np.ndarray
    series: ObservableSeries | None = None
    final: CoherentField | None = None
    metadata: dict = field(default_factory=dict)

    def breakdown(self) -> float | None:
        """First parameter value at which stationarity is lost, if any."""
        bad = np.flatnonzero(~self.converged)
        return None if bad.size == 0 else float(self.parameter[bad[0]])


def bulk_sites(n_x: int) -> slice:
    """Central half of the chain (0-based slice) used for bulk averages."""
    lo = n_x // 4
    return slice(lo, max(lo + 1, n_x - lo))


def _param_key(config: ScenarioConfig, parameter: str) -> str:
    if parameter not in RAMP_PARAMETERS:
        raise ScenarioError(f"cannot ramp {parameter!r}; choose from {sorted(RAMP_PARAMETERS)}")
    if parameter == "F" and config.profile is not None and config.profile.kind == "gradient":
        return "F0"
    return parameter


def ramp_config_function(config: ScenarioConfig, schedule: RampSchedule) -> Callable[[float], ScenarioConfig]:
    """Config at time t; profiles are linear in every rampable parameter."""
    key = _param_key(config, schedule.parameter)
    c0 = config.with_params(**{key: schedule.start})
    c1 = config.with_params(**{key: schedule.end}) if schedule.rate else c0
    T = schedule.total_time()

    class _At:
        __slots__ = ("J", "U", "delta", "drive", "loss", "lattice")

    def at(t: float):
        s = 0.0 if not schedule.rate else min(max(t / T, 0.0), 1.0)
        o = _At()
        o.J = c0.J
        o.U = (1 - s) * c0.U + s * c1.U
        o.delta = (1 - s) * c0.delta + s * c1.delta
        o.drive = (1 - s) * c0.drive + s * c1.drive
        o.loss = (1 - s) * c0.loss + s * c1.loss
        o.lattice = c0.lattice
        return o

    return at


def adiabatic_ramp(initial, config: ScenarioConfig, schedule: RampSchedule,
                   options: IntegratorOptions | None = None, keep_series: bool = False) -> RampResult:
    """Sweep one parameter linearly while monitoring stationarity in windows."""
    options = options or gp_options()
    state = initial.field if isinstance(initial, SteadyStateReport) else initial
    phi = np.asarray(state.phi if isinstance(state, CoherentField) else state, complex)
    T = schedule.total_time()
    losses = config.with_params(**{_param_key(config, schedule.parameter): schedule.start}).loss
    if schedule.rate and np.any(losses > 0):
        relax = 1.0 / losses[losses > 0].min()
        if T < 10 * relax:
            raise ScenarioError(f"ramp lasts {T:.3g} < 10x relaxation time {relax:.3g}; lower the rate")
    at = ramp_config_function(config, schedule)
    periodic = config.lattice.periodic
    bulk = bulk_sites(config.n_x)
    n_win = max(1, int(round(T / schedule.window)))
    edges = np.linspace(0.0, T, n_win + 1)
    rows = []
    parts = []
    prev_mean = None
    for a, b in zip(edges[:-1], edges[1:]):
        times = sample_times(a, b, min(options.sample_dt, (b - a) / 4))
        series, fld = _run(phi, config, times, options, store_phi=False, param_at=at)
        phi = fld.phi
        parts.append(series)
        n = np.abs(phi) ** 2
        j = bond_currents_from_phi(phi, config.J, periodic)
        n_mean = series.total_n.mean()
        drift = 0.0 if prev_mean is None else abs(n_mean - prev_mean) / max(n_mean, 1e-300)
        conv = bool(series.rhs_norm[-1] < schedule.tol * max(1.0, np.abs(phi).max())
                    and drift < schedule.tol * max(1.0, (b - a) * abs(schedule.rate)
                                                   / max(abs(schedule.value_at(b)), 1e-300)) * 10)
        prev_mean = n_mean
        nb = n[bulk]
        jb = j[bulk][: max(1, nb.size - 1)]
        ph = np.angle(np.mean(phi[bulk][1:] * np.conj(phi[bulk][:-1]))) if nb.size > 1 else 0.0
        rows.append((schedule.value_at(b), nb.mean(), jb.mean(), ph, conv))
    cols = list(zip(*rows))
    return RampResult(np.array(cols[0]), np.array(cols[1]), np.array(cols[2]), np.array(cols[3]),
                      np.array(cols[4], dtype=bool),
                      ObservableSeries.concatenate(parts) if keep_series else None,
                      CoherentField(phi, T),
                      {"config_hash": config.config_hash(), "parameter": schedule.parameter,
                       "rate": schedule.rate})
