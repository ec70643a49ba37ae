"""Symmetric three-mode Fock sectors and the Poisson-mixed probe state.

A sector collects the states ``|k, M-2k, k>`` (k atoms in each of the two
side modes, the rest in the central mode) for one total atom number M.
Spin mixing never leaves this subspace, so a state is just one complex
amplitude per pair number k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "SectorBasis",
    "SectorState",
    "PoissonMixture",
    "sector_basis",
    "poisson_sectors",
    "vacuum_probe",
]


@dataclass(frozen=True)
class SectorBasis:
    """Basis of the fixed-total-N sector, labelled by pair number k."""

    M: int

    @property
    def dim(self) -> int:
        return self.M // 2 + 1

    def k_values(self) -> np.ndarray:
        return np.arange(self.dim)

    def n0_values(self) -> np.ndarray:
        """Central-mode occupation M - 2k per basis state."""
        return self.M - 2 * self.k_values()


@dataclass(frozen=True)
class SectorState:
    """Complex amplitude vector over pair number within one sector.

    Immutable: the amplitude array is marked read-only so states can be
    shared across workers. Norm is 1 after any unitary operation; inside
    non-Hermitian (no-jump) evolution it carries the survival probability.
    """

    basis: SectorBasis
    amp: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amp, dtype=np.complex128)
        if amp.shape != (self.basis.dim,):
            raise ValueError(
                f"amplitude length {amp.shape} does not match sector dim {self.basis.dim}"
            )
        amp = amp.copy()
        amp.flags.writeable = False
        object.__setattr__(self, "amp", amp)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.amp.real**2 + self.amp.imag**2)))

    def probabilities(self) -> np.ndarray:
        return self.amp.real**2 + self.amp.imag**2


@dataclass(frozen=True)
class PoissonMixture:
    """Truncated Poisson weights over sector totals, renormalized to 1."""

    nbar: float
    totals: np.ndarray
    weights: np.ndarray
    epsilon: float
    retained_mass: float = field(default=1.0)

    def __iter__(self):
        return zip(self.totals.tolist(), self.weights.tolist())

    def __len__(self) -> int:
        return len(self.totals)

    @property
    def max_pairs(self) -> int:
        """Largest pair number reachable in any retained sector."""
        return int(self.totals.max()) // 2


def sector_basis(M: int) -> SectorBasis:
    """Basis of the total-atom-number-M sector; dim = floor(M/2) + 1."""
    if M < 0:
        raise ValueError(f"sector total must be non-negative, got {M}")
    return SectorBasis(int(M))


def vacuum_probe(M: int) -> SectorState:
    """All M atoms in the central mode, side modes empty: amp_k = delta_k0."""
    basis = sector_basis(M)
    amp = np.zeros(basis.dim, dtype=np.complex128)
    amp[0] = 1.0
    return SectorState(basis, amp)


def poisson_sectors(nbar: float, epsilon: float = 1e-10) -> PoissonMixture:
    """Smallest contiguous window of sector totals holding mass >= 1 - epsilon.

    Weights are evaluated in log space (nbar up to ~1000 overflows naive
    factorials) and renormalized once after truncation. The window grows
    greedily from the Poisson mode, adding whichever neighbour carries more
    weight, so it is contiguous by construction.
    """
    if not nbar > 0:
        raise ValueError(f"nbar must be positive, got {nbar}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")

    log_nbar = np.log(nbar)

    def logw(M: int) -> float:
        return M * log_nbar - nbar - float(gammaln(M + 1))

    lo = hi = int(np.floor(nbar))
    log_weights = {lo: logw(lo)}
    mass = np.exp(log_weights[lo])
    while mass < 1.0 - epsilon:
        below = logw(lo - 1) if lo > 0 else -np.inf
        above = logw(hi + 1)
        if above >= below:
            hi += 1
            log_weights[hi] = above
            mass += np.exp(above)
        else:
            lo -= 1
            log_weights[lo] = below
            mass += np.exp(below)

    totals = np.arange(lo, hi + 1)
    weights = np.exp(np.array([log_weights[M] for M in totals]))
    retained = float(weights.sum())
    weights = weights / retained
    totals.flags.writeable = False
    weights.flags.writeable = False
    return PoissonMixture(
        nbar=float(nbar),
        totals=totals,
        weights=weights,
        epsilon=float(epsilon),
        retained_mass=retained,
    )
