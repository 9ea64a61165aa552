"""Exact steady state of one coherently driven Kerr cavity and its lattice embedding.

The steady state of ``H = -delta n + U/2 n(n-1) + eta a^dag + eta^* a`` with
single-photon loss ``gamma_b`` is expressed through

    F(c, d, z) = sum_n  Gamma(c) Gamma(d) / (Gamma(c+n) Gamma(d+n))  z^n / n!

with ``c = -2 (delta + i gamma_b/2) / U`` and ``z = 8 |eta/U|^2``.  The series
is summed through its term ratio so no Gamma function is ever evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoConvergenceError, PoleError

SERIES_TOL = 1e-16
MAX_TERMS = 100_000
LOG_SCALE_Z = 1e4
_RESCALE = 1e200


@dataclass(frozen=True)
class CavityParams:
    eta: complex
    delta: float
    gamma_b: float
    U: float

    def __post_init__(self):
        if not self.U > 0:
            raise ValueError(f"single-cavity formulas need U > 0, got {self.U}")
        if self.gamma_b < 0:
            raise ValueError(f"gamma_b must be >= 0, got {self.gamma_b}")

    @property
    def c(self) -> complex:
        return -2.0 * complex(self.delta, 0.5 * self.gamma_b) / self.U

    @property
    def z(self) -> float:
        return 8.0 * abs(self.eta / self.U) ** 2


@dataclass
class HyperGeomResult:
    """``value = mantissa * exp(log_scale)``; ``log_scale`` is 0 unless rescaled."""

    mantissa: complex
    log_scale: float
    terms_used: int
    truncation_error_bound: float

    @property
    def value(self) -> complex:
        if self.log_scale == 0.0:
            return self.mantissa
        return self.mantissa * math.exp(self.log_scale)

    def ratio(self, other: "HyperGeomResult") -> complex:
        """``self.value / other.value`` without forming either value."""
        return self.mantissa / other.mantissa * math.exp(self.log_scale - other.log_scale)


def _check_pole(x: complex, name: str):
    if abs(x.imag) < 1e-12 and x.real < 0.5 and abs(x.real - round(x.real)) < 1e-12:
        raise PoleError(f"{name}={x} is a non-positive integer; the series is undefined")


def hypergeom_F(c: complex, d: complex, z: float, tol: float = SERIES_TOL,
                max_terms: int = MAX_TERMS) -> HyperGeomResult:
    """Sum the normalized 0F2 series ``F(c, d, z)`` for real ``z >= 0``.

    Stops once ``|t_n| < tol |S_n|`` holds for three consecutive terms past
    the region where the term ratio can still grow.  For ``z > 1e4`` running
    sums are rescaled to keep magnitudes finite; see :class:`HyperGeomResult`.
    """
    c, d = complex(c), complex(d)
    _check_pole(c, "c")
    _check_pole(d, "d")
    if z < 0:
        raise ValueError("z must be non-negative")
    if z == 0:
        return HyperGeomResult(1.0 + 0j, 0.0, 1, 0.0)
    rescale = z > LOG_SCALE_Z
    # term ratios only decrease monotonically once n exceeds the negative real parts
    n_min = int(math.ceil(max(0.0, -c.real, -d.real))) + 2
    t = 1.0 + 0j
    s = 1.0 + 0j
    log_scale = 0.0
    small = 0
    n = 0
    while True:
        q = z / ((c + n) * (d + n) * (n + 1))
        t *= q
        n += 1
        s += t
        if rescale and abs(s) > _RESCALE:
            t /= _RESCALE
            s /= _RESCALE
            log_scale += math.log(_RESCALE)
        if abs(t) < tol * abs(s):
            small += 1
            if small >= 3 and n >= n_min:
                break
        else:
            small = 0
        if n + 1 >= max_terms:
            raise NoConvergenceError(f"hypergeometric series did not converge in {max_terms} terms",
                                     residual=abs(t) / max(abs(s), 1e-300), iterations=n + 1)
    # geometric tail bound with the last (non-increasing) ratio
    r = abs(z / ((c + n) * (d + n) * (n + 1)))
    bound = abs(t) * r / (1.0 - r) / abs(s) if r < 1 else float("inf")
    return HyperGeomResult(s, log_scale, n + 1, bound)


def _detuning(p: CavityParams) -> complex:
    w = complex(p.delta, 0.5 * p.gamma_b)
    if w == 0:
        raise ZeroDivisionError("delta = gamma_b = 0: undamped resonance")
    return w


def dw_coherence(p: CavityParams) -> complex:
    """Steady-state ``<a>`` of the driven Kerr cavity."""
    w = _detuning(p)
    if p.eta == 0:
        return 0j
    c = p.c
    z = p.z
    num = hypergeom_F(1.0 + c, c.conjugate(), z)
    den = hypergeom_F(c, c.conjugate(), z)
    return complex(p.eta / w * num.ratio(den))


def dw_density(p: CavityParams) -> float:
    """Steady-state ``<a^dag a>`` of the driven Kerr cavity."""
    _detuning(p)
    if p.eta == 0:
        return 0.0
    c = p.c
    z = p.z
    num = hypergeom_F(1.0 + c, 1.0 + c.conjugate(), z)
    den = hypergeom_F(c, c.conjugate(), z)
    val = abs(2.0 * p.eta / p.U) ** 2 / abs(c) ** 2 * num.ratio(den)
    if abs(val.imag) > 1e-10 * max(abs(val.real), 1e-300):
        raise ArithmeticError(f"density has imaginary part {val.imag:.3e}")
    return float(val.real)


def dw_moments(p: CavityParams) -> tuple[complex, float]:
    """``(<a>, <a^dag a>)`` sharing the denominator series."""
    w = _detuning(p)
    if p.eta == 0:
        return 0j, 0.0
    c = p.c
    cc = c.conjugate()
    z = p.z
    den = hypergeom_F(c, cc, z)
    phi = p.eta / w * hypergeom_F(1.0 + c, cc, z).ratio(den)
    n = abs(2.0 * p.eta / p.U) ** 2 / abs(c) ** 2 * hypergeom_F(1.0 + c, 1.0 + cc, z).ratio(den)
    return complex(phi), float(n.real)


# --- phase-imprint lattice embedding ---------------------------------------

def embedding_drive(F: complex, phi: complex, phase: float, J: float = 1.0) -> complex:
    """Effective single-cavity drive of a plane wave on the y-invariant lattice."""
    return F - 2.0 * J * phi * (1.0 + math.cos(phase))


@dataclass
class SelfConsistentResult:
    phi: complex
    n: float
    j: float
    iterations: int
    residual: float


def pi_self_consistent(F: float, phase: float, delta: float, gamma_b: float, U: float, J: float = 1.0,
                       damping: float = 0.5, tol: float = 1e-10, max_iter: int = 10_000) -> SelfConsistentResult:
    """Homogeneous Gutzwiller phase-imprint state by damped fixed-point iteration.

    Iterates ``phi <- (1 - damping) phi + damping * dw_coherence(eta(phi))``.
    ``j = 2 J |phi|^2 sin(phase)``.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")

    def solve(phi):
        return dw_coherence(CavityParams(embedding_drive(F, phi, phase, J), delta, gamma_b, U))

    phi = 0j
    residual = float("inf")
    it = 0
    coupled = J * (1.0 + math.cos(phase)) != 0
    for it in range(1, max_iter + 1):
        new = solve(phi)
        residual = abs(new - phi)
        if not coupled:
            phi = new
            residual = 0.0
            break
        if residual < tol:
            phi = new
            break
        phi = (1.0 - damping) * phi + damping * new
    else:
        raise NoConvergenceError(f"self-consistency not reached in {max_iter} iterations "
                                 f"(residual {residual:.3e}); possibly multistable",
                                 residual=residual, iterations=max_iter)
    n = dw_density(CavityParams(embedding_drive(F, phi, phase, J), delta, gamma_b, U))
    return SelfConsistentResult(phi, n, 2.0 * J * abs(phi) ** 2 * math.sin(phase), it, residual)


def resonance_detunings(U: float, n_max: int) -> list[float]:
    """Multiphoton resonances ``delta = (U/2)(n - 1)`` for ``n = 1..n_max``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return [0.5 * U * (n - 1) for n in range(1, n_max + 1)]


def weak_drive_density(delta: float, gamma_b: float, U: float, exact: bool = False) -> tuple[float, float]:
    """Coefficients ``(a2, a4)`` of ``n ~ a2 F^2 + a4 F^4`` for weak drive.

    By default the bracket ``(g^2 + 4 d^2)((U - 2d)^2 + g^2) F^2 + 8U(4d - U) F^4``
    divided by ``U^6``, which fixes the ratio ``a4/a2`` but not the overall
    scale.  ``exact=True`` rescales both by ``4 U^6 / [(g^2 + 4 d^2)^2 ((U - 2d)^2 + g^2)]``
    to give the actual Taylor coefficients, ``a2 = 1 / (d^2 + g^2/4)``.
    """
    if not U > 0:
        raise ValueError("U must be positive")
    p = gamma_b ** 2 + 4.0 * delta ** 2
    q = (U - 2.0 * delta) ** 2 + gamma_b ** 2
    a2 = p * q / U ** 6
    a4 = 8.0 * U * (4.0 * delta - U) / U ** 6
    if exact:
        if p * q == 0:
            raise ZeroDivisionError("weak-drive expansion diverges at an undamped resonance")
        k = 4.0 * U ** 6 / (p * p * q)
        a2, a4 = a2 * k, a4 * k
    return a2, a4
