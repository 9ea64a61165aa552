"""Densities, bond currents, fluxes, balance residuals and scaling fits.

Bond ``l`` joins sites ``l`` and ``l + 1`` (and site N to site 1 on a ring).
Its current is ``j_{l,l+1} = 2 J Im(conj(phi_{l+1}) phi_l)``: positive values
flow from site ``l + 1`` towards site ``l``, i.e. from the driven edge
towards the drain in source-drain runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np
from scipy import stats

from .errors import NonPositiveDataError
from .model import ScenarioConfig
from .states import CoherentField, GutzwillerState

FLUX_EPS = 1e-300

State = Union[CoherentField, GutzwillerState, np.ndarray]


def coherences(state: State) -> np.ndarray:
    if isinstance(state, GutzwillerState):
        return state.coherences()
    if isinstance(state, CoherentField):
        return state.phi
    return np.asarray(state, dtype=complex)


def densities(state: State) -> np.ndarray:
    if isinstance(state, GutzwillerState):
        return state.densities()
    return np.abs(coherences(state)) ** 2


def bond_currents_from_phi(phi: np.ndarray, J: float, periodic: bool) -> np.ndarray:
    nxt = np.roll(phi, -1, axis=-1) if periodic else phi[..., 1:]
    cur = phi if periodic else phi[..., :-1]
    return 2.0 * J * np.imag(np.conj(nxt) * cur)


def bond_currents(state: State, config: ScenarioConfig) -> np.ndarray:
    """Coherence-factorized bond currents, one per bond."""
    return bond_currents_from_phi(coherences(state), config.J, config.lattice.periodic)


def flux_in(phi: np.ndarray, config: ScenarioConfig) -> float:
    return float(-2.0 * np.sum(np.imag(np.conj(config.drive) * phi)))


def flux_out(n: np.ndarray, config: ScenarioConfig) -> float:
    return float(np.sum(config.loss * n))


def flux_balance(state: State, config: ScenarioConfig) -> float:
    """Relative mismatch of injected and lost photon flux (0 at stationarity)."""
    fin = flux_in(coherences(state), config)
    fout = flux_out(densities(state), config)
    return abs(fin - fout) / max(fin, fout, FLUX_EPS)


@dataclass
class ObservableRecord:
    time: float
    densities: np.ndarray
    bond_currents: np.ndarray
    total_n: float
    flux_in: float
    flux_out: float


@dataclass
class ObservableSeries:
    """Time-ordered observables sampled along a trajectory."""

    times: np.ndarray
    densities: np.ndarray
    currents: np.ndarray
    flux_in: np.ndarray
    flux_out: np.ndarray
    phi: np.ndarray | None = None
    rhs_norm: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.size

    @property
    def total_n(self) -> np.ndarray:
        return self.densities.sum(axis=1)

    def records(self) -> Iterator[ObservableRecord]:
        for i, t in enumerate(self.times):
            yield ObservableRecord(float(t), self.densities[i], self.currents[i],
                                   float(self.densities[i].sum()),
                                   float(self.flux_in[i]), float(self.flux_out[i]))

    def window(self, t0: float, t1: float = np.inf) -> "ObservableSeries":
        sel = (self.times >= t0) & (self.times <= t1)
        pick = lambda a: None if a is None else a[sel]
        return ObservableSeries(self.times[sel], self.densities[sel], self.currents[sel],
                                self.flux_in[sel], self.flux_out[sel], pick(self.phi),
                                pick(self.rhs_norm), dict(self.metadata))

    @classmethod
    def concatenate(cls, parts: list["ObservableSeries"]) -> "ObservableSeries":
        parts = [p for p in parts if len(p)]
        cat = lambda name: (None if any(getattr(p, name) is None for p in parts)
                            else np.concatenate([getattr(p, name) for p in parts]))
        return cls(np.concatenate([p.times for p in parts]),
                   np.concatenate([p.densities for p in parts]),
                   np.concatenate([p.currents for p in parts]),
                   np.concatenate([p.flux_in for p in parts]),
                   np.concatenate([p.flux_out for p in parts]),
                   cat("phi"), cat("rhs_norm"), dict(parts[0].metadata))


class SeriesRecorder:
    """Accumulates samples; used by the integrators."""

    def __init__(self, config: ScenarioConfig, store_phi: bool = False):
        self.config = config
        self.store_phi = store_phi
        self._rows: list[tuple] = []

    def add(self, t: float, phi: np.ndarray, n: np.ndarray, rhs_norm: float | None = None,
            config: ScenarioConfig | None = None):
        cfg = config or self.config
        self._rows.append((t, n.copy(),
                           bond_currents_from_phi(phi, cfg.J, cfg.lattice.periodic),
                           flux_in(phi, cfg), flux_out(n, cfg),
                           phi.copy() if self.store_phi else None, rhs_norm))

    def series(self, metadata: dict | None = None) -> ObservableSeries:
        rows = self._rows
        n_x = self.config.n_x
        nb = self.config.lattice.n_bonds
        if not rows:
            empty = np.zeros((0, n_x))
            return ObservableSeries(np.zeros(0), empty, np.zeros((0, nb)), np.zeros(0), np.zeros(0),
                                    np.zeros((0, n_x), complex) if self.store_phi else None,
                                    None, metadata or {})
        cols = list(zip(*rows))
        rhs = None if cols[6][0] is None else np.array(cols[6], dtype=float)
        return ObservableSeries(np.array(cols[0]), np.array(cols[1]), np.array(cols[2]),
                                np.array(cols[3]), np.array(cols[4]),
                                np.array(cols[5]) if self.store_phi else None, rhs,
                                metadata or {})


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    ci95: float

    @property
    def interval(self) -> tuple[float, float]:
        return self.slope - self.ci95, self.slope + self.ci95


def current_exponent_fit(F, j) -> ExponentFit:
    """Least-squares slope of ``log j`` against ``log F``."""
    F = np.asarray(F, dtype=float)
    j = np.asarray(j, dtype=float)
    if F.size < 5:
        raise ValueError("need at least 5 points for an exponent fit")
    if np.any(F <= 0) or np.any(j <= 0):
        raise NonPositiveDataError("exponent fit requires strictly positive F and j")
    res = stats.linregress(np.log(F), np.log(j))
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    ci = float(stats.t.ppf(0.975, F.size - 2) * stderr)
    return ExponentFit(float(res.slope), float(res.intercept), stderr, ci)
