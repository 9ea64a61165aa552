"""Independent reference constructions shared by the tests."""

from __future__ import annotations

import numpy as np


def ladder(nmax: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, nmax + 1)), 1).astype(complex)


def kerr_hamiltonian(eta, delta, U, nmax):
    """H = -delta a^+a + U/2 a^+a^+aa + eta a^+ + eta* a on levels 0..nmax."""
    a = ladder(nmax)
    ad = a.conj().T
    return -delta * (ad @ a) + 0.5 * U * (ad @ ad @ a @ a) + eta * ad + np.conj(eta) * a


def liouvillian(H, gamma_b):
    """Dense superoperator for row-major vec(rho): vec(A X B) = (A kron B^T) vec(X)."""
    dim = H.shape[0]
    a = ladder(dim - 1)
    num = a.conj().T @ a
    eye = np.eye(dim)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    L += gamma_b * (np.kron(a, a.conj()) - 0.5 * np.kron(num, eye) - 0.5 * np.kron(eye, num.T))
    return L


def lindblad_steady(eta, delta, gamma_b, U, nmax=30):
    """Steady ``(<a>, <a^+a>)`` of the driven, damped Kerr cavity."""
    L = liouvillian(kerr_hamiltonian(eta, delta, U, nmax), gamma_b)
    w, v = np.linalg.eig(L)
    rho = v[:, np.argmin(np.abs(w))].reshape(nmax + 1, nmax + 1)
    rho /= np.trace(rho)
    a = ladder(nmax)
    return complex(np.trace(a @ rho)), float(np.trace(a.conj().T @ a @ rho).real)
