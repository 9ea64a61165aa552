"""Sampled time propagation of complex ODE systems.

Adaptive runs go through scipy's Dormand-Prince codes (``dopri5`` is the
5(4) pair, ``dop853`` the 8(5,3) pair).  ``fixed_step`` switches to classic
fourth-order Runge-Kutta with a uniform step inside every sample interval,
which makes output bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import ode

from .errors import BlowUpError, SolverError

ComplexRHS = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class IntegratorOptions:
    rtol: float = 1e-9
    atol: float = 1e-12
    method: str = "dopri5"
    fixed_step: float | None = None
    sample_dt: float = 1.0
    max_amplitude: float = 1e6

    def describe(self) -> dict:
        return {"rtol": self.rtol, "atol": self.atol, "method": self.method,
                "fixed_step": self.fixed_step, "sample_dt": self.sample_dt}


def sample_times(t0: float, t1: float, dt: float) -> np.ndarray:
    if t1 < t0:
        raise ValueError("t_span must be increasing")
    k = int(math.floor((t1 - t0) / dt + 1e-9))
    times = t0 + dt * np.arange(k + 1)
    if t1 - times[-1] > 1e-9 * max(1.0, abs(t1)):
        times = np.append(times, t1)
    return times


def _rk4_interval(f: ComplexRHS, t: float, y: np.ndarray, t_end: float, h: float) -> np.ndarray:
    steps = max(1, int(math.ceil((t_end - t) / h - 1e-9)))
    hh = (t_end - t) / steps
    for i in range(steps):
        ti = t + i * hh
        k1 = f(ti, y)
        k2 = f(ti + 0.5 * hh, y + 0.5 * hh * k1)
        k3 = f(ti + 0.5 * hh, y + 0.5 * hh * k2)
        k4 = f(ti + hh, y + hh * k3)
        y = y + (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def propagate(f: ComplexRHS, y0: np.ndarray, times: np.ndarray, options: IntegratorOptions,
              on_sample: Callable[[float, np.ndarray], None]) -> np.ndarray:
    """Integrate ``dy/dt = f(t, y)`` and call ``on_sample`` at every time.

    ``on_sample`` also receives ``times[0]`` with the initial state.  Returns
    the state at ``times[-1]``.
    """
    shape = y0.shape
    y = np.ascontiguousarray(y0, dtype=complex).copy()
    on_sample(float(times[0]), y)
    if times.size == 1:
        return y

    if options.fixed_step:
        for t_prev, t_next in zip(times[:-1], times[1:]):
            y = _rk4_interval(f, float(t_prev), y, float(t_next), options.fixed_step)
            _check(t_next, y, options.max_amplitude)
            on_sample(float(t_next), y)
        return y

    def freal(t, yr):
        dy = f(t, yr.view(complex).reshape(shape))
        return np.ascontiguousarray(dy).reshape(-1).view(np.float64)

    solver = ode(freal).set_integrator(options.method, rtol=options.rtol, atol=options.atol,
                                       nsteps=2**31 - 1)
    solver.set_initial_value(y.reshape(-1).view(np.float64).copy(), float(times[0]))
    for t_next in times[1:]:
        yr = solver.integrate(float(t_next))
        if not solver.successful():
            raise SolverError(f"integrator {options.method} failed at t={solver.t:.6g} "
                              f"(code {solver.get_return_code()})")
        y = yr.view(complex).reshape(shape).copy()
        _check(t_next, y, options.max_amplitude)
        on_sample(float(t_next), y)
    return y


def _check(t, y, bound):
    amax = np.abs(y).max() if y.size else 0.0
    if not np.isfinite(amax):
        raise BlowUpError(f"non-finite state at t={t:.6g}")
    if amax > bound:
        raise BlowUpError(f"|state| = {amax:.3e} exceeds bound {bound:.3e} at t={t:.6g}")
