"""State containers for the two mean-field tiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CoherentField:
    """Local coherences ``phi_l = <a_l>`` of a coherent-field state."""

    phi: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=complex)

    @property
    def densities(self) -> np.ndarray:
        return np.abs(self.phi) ** 2

    @classmethod
    def vacuum(cls, n_x: int) -> "CoherentField":
        return cls(np.zeros(n_x, dtype=complex))

    @classmethod
    def plane_wave(cls, n_x: int, density: float, phase: float, noise: float = 0.0,
                   seed: int | None = None) -> "CoherentField":
        """``sqrt(density) exp(i phase l)`` for ``l = 1..n_x``.

        ``noise`` adds a uniformly distributed per-site phase in
        ``[-noise, noise]`` drawn from a generator seeded by ``seed``.
        """
        l = np.arange(1, n_x + 1)
        theta = phase * l
        if noise:
            rng = np.random.default_rng(seed)
            theta = theta + rng.uniform(-noise, noise, n_x)
        return cls(np.sqrt(density) * np.exp(1j * theta))


@dataclass
class GutzwillerState:
    """Per-site density matrices ``c[l, n, m] = <n|rho_l|m>``."""

    sites: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=complex)
        if self.sites.ndim != 3 or self.sites.shape[1] != self.sites.shape[2]:
            raise ValueError(f"site matrices must have shape (N, Nc, Nc), got {self.sites.shape}")

    @property
    def n_x(self) -> int:
        return self.sites.shape[0]

    @property
    def cutoff(self) -> int:
        return self.sites.shape[1]

    def coherences(self) -> np.ndarray:
        sq = np.sqrt(np.arange(1, self.cutoff))
        return (sq * np.diagonal(self.sites[:, 1:, :-1], axis1=1, axis2=2)).sum(axis=1)

    def densities(self) -> np.ndarray:
        n = np.arange(self.cutoff)
        return (n * np.diagonal(self.sites, axis1=1, axis2=2).real).sum(axis=1)

    def traces(self) -> np.ndarray:
        return np.trace(self.sites, axis1=1, axis2=2)

    def top_occupation(self) -> float:
        """Summed population of the highest retained Fock level."""
        return float(self.sites[:, -1, -1].real.sum())

    def hermiticity_error(self) -> float:
        return float(np.abs(self.sites - np.conj(np.swapaxes(self.sites, 1, 2))).max())

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.sites + np.conj(np.swapaxes(self.sites, 1, 2)))
        return float(np.linalg.eigvalsh(herm).min())

    def to_field(self) -> CoherentField:
        return CoherentField(self.coherences(), self.time)

    @classmethod
    def vacuum(cls, n_x: int, cutoff: int = 10) -> "GutzwillerState":
        c = np.zeros((n_x, cutoff, cutoff), dtype=complex)
        c[:, 0, 0] = 1.0
        return cls(c)

    @classmethod
    def coherent(cls, alphas, cutoff: int = 10) -> "GutzwillerState":
        """Product of truncated, renormalized coherent states ``|alpha_l>``."""
        alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
        k = np.arange(cutoff)
        log_fact = np.cumsum(np.log(np.maximum(k, 1)))
        amp = np.empty((alphas.size, cutoff), dtype=complex)
        for i, a in enumerate(alphas):
            if a == 0:
                amp[i] = 0.0
                amp[i, 0] = 1.0
                continue
            amp[i] = np.exp(k * np.log(a) - 0.5 * log_fact)
            amp[i] /= np.linalg.norm(amp[i])
        return cls(np.einsum("ln,lm->lnm", amp, amp.conj()))

    @classmethod
    def fock(cls, occupations, cutoff: int = 10) -> "GutzwillerState":
        occupations = np.atleast_1d(occupations)
        c = np.zeros((occupations.size, cutoff, cutoff), dtype=complex)
        c[np.arange(occupations.size), occupations, occupations] = 1.0
        return cls(c)
