"""Quadratic fluctuations around the homogeneous phase-imprint solution.

Writing ``a_k = beta delta_{k,Q} + b_k`` with condensate momentum
``Q = (phase, 0)`` and keeping terms quadratic in ``b_k`` couples every mode
to its pairing partner ``kk = (2 phase - k_x, k_y)``.  The stationary
occupation of the pair follows from two linear conditions on
``m = <b_k^dag b_k>`` and ``X = <b_k b_kk>``; eliminating ``X`` gives

    m(k) = 2 (U n)^2 / [(w_k + w_kk + 4 n U)^2 + gamma_b^2 - 4 (U n)^2]

with the single-particle dispersion ``w_k = -delta - 2J (cos k_x + cos k_y)``.
A non-positive denominator means the pair grows without bound, i.e. the
mean-field solution is dynamically unstable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnstableModeError
from .model import ScenarioConfig

DEFAULT_GRID = (64, 64)
MARGINAL_REL = 1e-6


def dispersion(kx, ky, delta: float, J: float = 1.0):
    return -delta - 2.0 * J * (np.cos(kx) + np.cos(ky))


def pair_momentum(kx, ky, phase: float):
    """Pairing partner, reduced to [0, 2 pi)."""
    return np.mod(2.0 * phase - np.asarray(kx, dtype=float), 2.0 * math.pi), np.asarray(ky, dtype=float)


def _numerator_denominator(kx, ky, n, U, delta, gamma_b, J, phase, alt_form=False):
    qx, qy = pair_momentum(kx, ky, phase)
    wsum = dispersion(kx, ky, delta, J) + dispersion(qx, qy, delta, J)
    un = U * n
    if alt_form:
        # variant with the dispersion sum squared inside; dimensionally inconsistent, kept for comparison
        a = (wsum ** 2 + 4.0 * n * U) ** 2
    else:
        a = (wsum + 4.0 * un) ** 2
    return 2.0 * un * un, a + gamma_b ** 2 - 4.0 * un * un


def mode_occupation(k, n_PI: float, U: float, delta: float, gamma_b: float, J: float = 1.0,
                    phase: float = math.pi / 2, alt_form: bool = False) -> float:
    """Stationary occupation ``m(k)`` of a single momentum ``k = (k_x, k_y)``."""
    if n_PI < 0:
        raise ValueError("condensate density must be non-negative")
    kx, ky = k
    num, den = _numerator_denominator(float(kx), float(ky), n_PI, U, delta, gamma_b, J, phase, alt_form)
    if num == 0.0:
        return 0.0
    if not den > 0:
        raise UnstableModeError(f"fluctuations diverge at k=({kx:.6g}, {ky:.6g}): denominator {den:.3e}",
                                k=(float(kx), float(ky)))
    return float(num / den)


def pair_moments_oracle(k, n_PI, U, delta, gamma_b, J=1.0, phase=math.pi / 2):
    """Solve the two stationarity conditions directly as a real 3x3 system.

    Unknowns ``(m, Re X, Im X)`` with ``m = <b_k^dag b_k> = <b_kk^dag b_kk>``
    and ``X = <b_k b_kk>``.  With a real condensate amplitude:

        gamma m + 2 U n Im X = 0
        (w_k + w_kk + 4 U n - i gamma) X + U n (2 m + 1) = 0

    Independent of the closed form; used to validate it.
    """
    kx, ky = k
    qx, qy = pair_momentum(kx, ky, phase)
    a = float(dispersion(kx, ky, delta, J) + dispersion(qx, qy, delta, J) + 4.0 * U * n_PI)
    un = U * n_PI
    g = gamma_b
    A = np.array([[g, 0.0, 2.0 * un],
                  [2.0 * un, a, g],
                  [0.0, -g, a]])
    rhs = np.array([0.0, -un, 0.0])
    m, xr, xi = np.linalg.solve(A, rhs)
    return float(m), complex(xr, xi)


@dataclass
class FluctuationGrid:
    N_x: int
    N_y: int
    phase: float
    n_PI: float
    U: float
    delta: float
    gamma_b: float
    J: float
    kx: np.ndarray
    ky: np.ndarray
    m_k: np.ndarray
    denominators: np.ndarray
    condensate_index: tuple[int, int] | None

    @property
    def min_denominator(self) -> float:
        return float(self.denominators.min())

    @property
    def ratio(self) -> float:
        """``sum_k m(k) / (n_PI N_x N_y)`` without the condensate mode."""
        if self.n_PI == 0:
            return 0.0
        m = self.m_k.copy()
        if self.condensate_index is not None:
            m[self.condensate_index] = 0.0
        return float(np.sum(m.ravel()) / (self.n_PI * self.N_x * self.N_y))

    def rows(self):
        """(k_x, k_y, m_k) triples in grid order."""
        KX, KY = np.meshgrid(self.kx, self.ky, indexing="ij")
        return np.column_stack([KX.ravel(), KY.ravel(), self.m_k.ravel()])


def _grid(n_PI, U, delta, gamma_b, J, phase, grid, alt_form):
    nx, ny = grid
    if nx < 1 or ny < 1:
        raise ValueError("grid sizes must be positive")
    kx = 2.0 * math.pi * np.arange(nx) / nx
    ky = 2.0 * math.pi * np.arange(ny) / ny
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    num, den = _numerator_denominator(KX, KY, n_PI, U, delta, gamma_b, J, phase, alt_form)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(num > 0, num / den, 0.0)
    ix = (phase % (2.0 * math.pi)) * nx / (2.0 * math.pi)
    cidx = (int(round(ix)) % nx, 0) if abs(ix - round(ix)) < 1e-9 else None
    return FluctuationGrid(nx, ny, phase, n_PI, U, delta, gamma_b, J, kx, ky, m, den, cidx)


def _condensate_denominator(n_PI, U, delta, gamma_b, J, phase, alt_form=False):
    return float(_numerator_denominator(phase, 0.0, n_PI, U, delta, gamma_b, J, phase, alt_form)[1])


def fluctuation_grid(n_PI: float, U: float, delta: float, gamma_b: float, J: float = 1.0,
                     phase: float = math.pi / 2, grid=DEFAULT_GRID, alt_form: bool = False) -> FluctuationGrid:
    return _grid(n_PI, U, delta, gamma_b, J, phase, grid, alt_form)


def _pi_params(config: ScenarioConfig):
    prof = config.profile
    if prof is None or prof.kind != "phase_imprint":
        raise ValueError("fluctuations are defined around the phase-imprint plane wave")
    return config.U, config.delta, prof.gamma_b, config.J, prof.phase


def fluctuation_ratio(config: ScenarioConfig, n_PI: float, grid=DEFAULT_GRID, alt_form: bool = False) -> float:
    """Depletion estimate ``m / n_PI`` for a phase-imprint configuration."""
    U, delta, gamma_b, J, phase = _pi_params(config)
    g = _grid(n_PI, U, delta, gamma_b, J, phase, grid, alt_form)
    if U * n_PI == 0:
        return 0.0
    bad = np.argwhere(~(g.denominators > 0))
    if bad.size:
        i, k = bad[0]
        raise UnstableModeError(f"unstable fluctuation mode at k=({g.kx[i]:.6g}, {g.ky[k]:.6g})",
                                k=(float(g.kx[i]), float(g.ky[k])))
    return g.ratio


def classify_branch(n_PI: float, U: float, delta: float, gamma_b: float, J: float = 1.0,
                    phase: float = math.pi / 2, grid=DEFAULT_GRID) -> str:
    """``stable``, ``unstable`` or ``marginal`` for one homogeneous root.

    The condensate pair ``k = kk = (phase, 0)`` is always tested in addition
    to the grid, since the fold instability of the cubic shows up there first.
    """
    if n_PI < 0:
        raise ValueError("root must be non-negative")
    un = U * n_PI
    if un == 0:
        return "stable"
    g = _grid(n_PI, U, delta, gamma_b, J, phase, grid, False)
    dmin = min(g.min_denominator, _condensate_denominator(n_PI, U, delta, gamma_b, J, phase))
    if dmin <= 0:
        return "unstable"
    if dmin < MARGINAL_REL * un * un:
        return "marginal"
    return "stable"
