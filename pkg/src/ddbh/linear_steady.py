"""Exact steady states of the non-interacting lattice.

At ``U = 0`` the coherences obey the linear system ``M phi = -F/J`` with the
complex tridiagonal coupling matrix

    M_ll = -2 - delta/J - i gamma_l / (2J),   M_{l,l+-1} = -1,

where the ``-2`` is the pair of y-neighbours of each column.  Corners are
filled in for a periodic ring.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve

from .errors import SingularMatrixError
from .model import ScenarioConfig, Y_COORDINATION
from .observables import bond_currents_from_phi
from .states import CoherentField

RCOND_MIN = 1e-12


@dataclass(frozen=True)
class CouplingMatrix:
    diagonal: np.ndarray
    periodic: bool

    @property
    def size(self) -> int:
        return self.diagonal.size

    def dense(self) -> np.ndarray:
        n = self.size
        m = np.diag(self.diagonal.astype(complex))
        if n > 1:
            idx = np.arange(n - 1)
            m[idx, idx + 1] = -1.0
            m[idx + 1, idx] = -1.0
        if self.periodic and n > 2:
            m[0, n - 1] = m[n - 1, 0] = -1.0
        return m

    def matvec(self, phi: np.ndarray) -> np.ndarray:
        out = self.diagonal * phi
        out[1:] -= phi[:-1]
        out[:-1] -= phi[1:]
        if self.periodic and self.size > 2:
            out[0] -= phi[-1]
            out[-1] -= phi[0]
        return out


@dataclass
class LinearSteadyState:
    field: CoherentField
    residual: float


def assemble_coupling_matrix(config: ScenarioConfig) -> CouplingMatrix:
    J = config.J
    if J <= 0:
        raise ValueError("the coupling matrix is defined in units of J and needs J > 0")
    diag = -Y_COORDINATION - config.delta / J - 0.5j * config.loss / J
    return CouplingMatrix(np.asarray(diag, dtype=complex), config.lattice.periodic)


def steady_state_linear(config: ScenarioConfig) -> LinearSteadyState:
    """Solve ``M phi = -F/J``; the interaction strength is ignored."""
    M = assemble_coupling_matrix(config)
    rhs = -config.drive / config.J
    if not np.any(rhs):
        return LinearSteadyState(CoherentField(np.zeros(M.size, complex)), 0.0)
    dense = M.dense()
    with warnings.catch_warnings():
        # singularity is reported through the condition estimate below
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(dense, check_finite=False)
    anorm = np.abs(dense).sum(axis=0).max()
    rcond, _ = lapack.zgecon(lu, anorm, norm="1")
    if not rcond >= RCOND_MIN:
        raise SingularMatrixError(
            f"coupling matrix is singular (rcond={rcond:.3e}); delta={config.delta} "
            "hits an undamped eigenmode")
    phi = lu_solve((lu, piv), rhs, check_finite=False)
    residual = float(np.abs(M.matvec(phi) - rhs).max())
    return LinearSteadyState(CoherentField(phi), residual)


def pi_homogeneous_analytic(F: float, phase: float, delta: float, gamma_b: float, J: float = 1.0):
    """Closed-form density and current of the homogeneous phase-imprint state.

    Returns ``(n, j)`` with ``j = 2 J n sin(phase)``.  In the bond convention
    of :mod:`ddbh.observables` a winding ``exp(i phase l)`` carries ``-j``.
    """
    denom = (2 * J * (1 + np.cos(phase)) + delta) ** 2 + gamma_b ** 2 / 4
    if denom == 0:
        raise ZeroDivisionError("undamped phase-imprint resonance: density diverges")
    n = F ** 2 / denom
    return n, 2 * J * n * np.sin(phase)


@dataclass
class ResonanceCurve:
    deltas: np.ndarray
    densities: np.ndarray
    currents: np.ndarray
    residuals: np.ndarray

    @property
    def bulk_current(self) -> np.ndarray:
        """Current on the leftmost bond (between sites 1 and 2)."""
        return self.currents[:, 0]


def resonance_curve(config: ScenarioConfig, deltas) -> ResonanceCurve:
    """Linear steady states over a detuning grid; singular points give NaN."""
    deltas = np.asarray(deltas, dtype=float)
    nb = config.lattice.n_bonds
    dens = np.full((deltas.size, config.n_x), np.nan)
    cur = np.full((deltas.size, nb), np.nan)
    res = np.full(deltas.size, np.nan)
    for i, d in enumerate(deltas):
        try:
            st = steady_state_linear(config.with_params(delta=float(d)))
        except SingularMatrixError:
            continue
        phi = st.field.phi
        dens[i] = np.abs(phi) ** 2
        cur[i] = bond_currents_from_phi(phi, config.J, config.lattice.periodic)
        res[i] = st.residual
    return ResonanceCurve(deltas, dens, cur, res)
