"""Spin-mixing Hamiltonian per sector, cached diagonalization, evolution.

In the pair basis ``|k, M-2k, k>`` the spin-mixing Hamiltonian (units of
chi*hbar) is tridiagonal:

    diagonal       D_k = (M - 2k - 1/2) * 2k
    superdiagonal  H_{k,k+1} = e^{-2i phi} (k+1) sqrt((M-2k)(M-2k-1))

The constant off-diagonal phase is a gauge: with U = diag(e^{2ik phi}),
H(phi) = U H(0) U^dag, so one real symmetric tridiagonal eigensystem per
sector serves every phi, pulse area and phase shift. Only the products
chi*t (pulse area) and ratios like gamma/chi ever enter; chi itself never
appears.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .hilbert import SectorState, sector_basis

__all__ = [
    "PulseSpec",
    "SectorPropagator",
    "tridiagonal_coefficients",
    "build_smd_matrix",
    "sector_propagator",
    "evolve_smd",
    "evolve_smd_dense",
    "apply_phase",
    "pair_moments",
    "propagator_cache_clear",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PulseSpec:
    """One spin-mixing pulse: dimensionless area chi*t and mixing phase phi.

    Negative area means evolution under e^{+i H |t|} (the reversed pulse).
    """

    area: float
    phi: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.area):
            raise ValueError(f"pulse area must be finite, got {self.area}")
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    def inverse(self) -> "PulseSpec":
        return PulseSpec(-self.area, self.phi)


@dataclass(frozen=True)
class SectorPropagator:
    """Cached eigensystem of the gauge-reduced (real symmetric) Hamiltonian.

    phi_gauge is the gauge in which the reduction is performed; the single
    phi=0 eigensystem serves all mixing phases via diagonal phase factors.
    """

    M: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    phi_gauge: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)


def tridiagonal_coefficients(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Real diagonal and off-diagonal of the sector Hamiltonian at phi=0."""
    if M < 0:
        raise ValueError(f"sector total must be non-negative, got {M}")
    k = np.arange(M // 2 + 1)
    diag = (M - 2 * k - 0.5) * (2.0 * k)
    n0 = (M - 2 * k).astype(float)
    offd = (k[:-1] + 1) * np.sqrt(n0[:-1] * (n0[:-1] - 1.0))
    return diag, offd


def build_smd_matrix(M: int, phi: float = 0.0) -> np.ndarray:
    """Dense Hermitian tridiagonal spin-mixing matrix (units of chi*hbar)."""
    diag, offd = tridiagonal_coefficients(M)
    H = np.diag(diag).astype(np.complex128)
    if len(offd):
        upper = np.exp(-2j * phi) * offd
        H += np.diag(upper, 1) + np.diag(upper.conj(), -1)
    return H


class _PropagatorCache:
    """Write-once-read-many LRU keyed by sector total, bounded in bytes."""

    def __init__(self, limit_mb: float):
        self._lock = threading.Lock()
        self._store: dict[int, SectorPropagator] = {}
        self._order: list[int] = []
        self._bytes = 0
        self.limit_bytes = int(limit_mb * 2**20)

    @staticmethod
    def _size(prop: SectorPropagator) -> int:
        return prop.eigenvalues.nbytes + prop.eigenvectors.nbytes

    def get(self, M: int) -> SectorPropagator | None:
        with self._lock:
            prop = self._store.get(M)
            if prop is not None:
                self._order.remove(M)
                self._order.append(M)
            return prop

    def put(self, M: int, prop: SectorPropagator) -> None:
        size = self._size(prop)
        with self._lock:
            if M in self._store:
                return
            while self._bytes + size > self.limit_bytes and self._order:
                old = self._order.pop(0)
                self._bytes -= self._size(self._store.pop(old))
            self._store[M] = prop
            self._order.append(M)
            self._bytes += size

    def clear(self) -> None:
        with self._lock:
            self._store.clear()
            self._order.clear()
            self._bytes = 0


_cache = _PropagatorCache(limit_mb=float(os.environ.get("SPINMIX_CACHE_MB", "2560")))


def propagator_cache_clear() -> None:
    _cache.clear()


def sector_propagator(M: int, cache: bool = True) -> SectorPropagator:
    """Eigendecomposition of the phi=0 sector Hamiltonian, cached per M."""
    if cache:
        hit = _cache.get(M)
        if hit is not None:
            return hit
    diag, offd = tridiagonal_coefficients(M)
    if len(diag) == 1:
        lam, vec = diag.copy(), np.ones((1, 1))
    else:
        lam, vec = eigh_tridiagonal(diag, offd)
    lam.flags.writeable = False
    vec.flags.writeable = False
    prop = SectorPropagator(M=int(M), eigenvalues=lam, eigenvectors=vec)
    if cache:
        _cache.put(M, prop)
    return prop


def propagate_columns(
    prop: SectorPropagator, area: float, cols: np.ndarray, phi: float = 0.0
) -> np.ndarray:
    """Apply e^{-i H(phi) area} to a (dim, n) block of column vectors."""
    if area == 0.0:
        return cols.copy()
    V = prop.eigenvectors
    phase = np.exp(-1j * prop.eigenvalues * area)
    if phi != 0.0:
        k = np.arange(prop.dim)
        gauge = np.exp(2j * k * phi)
        cols = gauge.conj()[:, None] * cols
        out = V @ (phase[:, None] * (V.T @ cols))
        return gauge[:, None] * out
    return V @ (phase[:, None] * (V.T @ cols))


def evolve_smd(state: SectorState, pulse: PulseSpec, cache: bool = True) -> SectorState:
    """Evolve under e^{-i H(phi) * area} via the cached eigendecomposition."""
    prop = sector_propagator(state.basis.M, cache=cache)
    out = propagate_columns(prop, pulse.area, state.amp[:, None], pulse.phi)[:, 0]
    return SectorState(state.basis, out)


def evolve_smd_dense(state: SectorState, pulse: PulseSpec) -> SectorState:
    """Reference path: direct complex-Hermitian diagonalization, no gauge trick.

    Exponential memory-free only for small sectors; used to validate the
    gauge reduction (M <= 40 in the tests).
    """
    H = build_smd_matrix(state.basis.M, pulse.phi)
    lam, V = np.linalg.eigh(H)
    out = V @ (np.exp(-1j * lam * pulse.area) * (V.conj().T @ state.amp))
    return SectorState(state.basis, out)


def apply_phase(state: SectorState, theta: float) -> SectorState:
    """Phase-shift stage: amp_k <- amp_k e^{-i theta k}.

    The phase Hamiltonian q(N_+1 + N_-1) acting for time t_PS gives
    q t_PS * 2k = (theta/2)(2k) = theta*k per basis state.
    """
    k = state.basis.k_values()
    return SectorState(state.basis, state.amp * np.exp(-1j * theta * k))


def pair_moments(state: SectorState) -> tuple[float, float]:
    """Mean and variance of the pair number k in the given state."""
    p = state.probabilities()
    k = state.basis.k_values()
    m1 = float(k @ p)
    m2 = float((k * k) @ p)
    return m1, m2 - m1 * m1
