"""Phase-estimation figures of merit: Fisher information, Cramer-Rao bound,
error propagation, optimized sensitivity and critical atom numbers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import PoissonMixture, poisson_sectors
from .dynamics import PulseSpec, propagate_columns, sector_propagator
from .interferometer import (
    OutputDistribution,
    UnreachableEtaError,
    fringe_center,
    output_moments,
    second_pulse,
    sequence_distribution_grid,
    solve_pulse_for_eta,
)

__all__ = [
    "EstimationResult",
    "ZeroSlopeError",
    "NoSSNError",
    "PROBABILITY_FLOOR",
    "default_theta_grid",
    "lossy_theta_grid",
    "fisher_from_arrays",
    "fisher_information",
    "fisher_at_zero",
    "fisher_opt",
    "fopt_at",
    "error_propagation",
    "estimate",
    "ssn_critical_n",
    "ssn_critical_n_meanfield_detection",
]

# guards (dp)^2/p against catastrophic cancellation, not against physics
PROBABILITY_FLOOR = 1e-30


class ZeroSlopeError(ArithmeticError):
    """Error propagation diverges: the output population is stationary."""


class NoSSNError(RuntimeError):
    """No sub-shot-noise atom number found below the configured ceiling."""


@dataclass(frozen=True)
class EstimationResult:
    """F(theta), Cramer-Rao bound and error-propagation sensitivity.

    m is a pure reporting parameter (independent repetitions); every bound
    scales as 1/sqrt(m).
    """

    theta: float
    fisher: float
    crb: float
    ep: float
    m: int = 1


def default_theta_grid() -> np.ndarray:
    """Log-spaced 1e-3..0.1 (20 points) plus linear up to pi (50 points).

    The noiseless optimum sits at theta -> 0; noisy optima can shift.
    """
    return np.concatenate(
        [np.geomspace(1e-3, 0.1, 20), np.linspace(0.1, np.pi, 51)[1:]]
    )


def lossy_theta_grid() -> np.ndarray:
    """Coarser grid for Monte Carlo runs; F(0) = 0 for mixed outputs, so the
    optimum lives at small positive phase."""
    return np.concatenate([np.geomspace(2e-3, 0.2, 8), [0.4, 0.8, 1.5, 2.5]])


def fisher_from_arrays(p: np.ndarray, dp: np.ndarray) -> float:
    """Sum of (dp_k)^2 / p_k over outcomes with p_k above the floor."""
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    m = p > PROBABILITY_FLOOR
    return float(np.sum(dp[m] ** 2 / p[m]))


def fisher_information(dist: OutputDistribution) -> float:
    if dist.dp_dtheta is None:
        raise ValueError("distribution carries no derivative channel")
    return fisher_from_arrays(dist.p, dist.dp_dtheta)


def fisher_at_zero(
    probe: PoissonMixture, pulse1: PulseSpec, threads: int | None = None
) -> float:
    """theta -> 0 Fisher limit for the exact-inverse second pulse.

    At the compensation point P_k ~ theta^2 A_k for k > 0 and
    sum_k A_k = Var(k) on the post-first-pulse state, so
    F(0) = 4 * sum_M w_M Var_M(k). Only valid when pulse 2 inverts pulse 1.
    """
    if pulse1.area == 0.0:
        return 0.0
    total = 0.0
    for M, wm in probe:
        prop = sector_propagator(M)
        e0 = np.zeros((prop.dim, 1), dtype=np.complex128)
        e0[0] = 1.0
        psi1 = propagate_columns(prop, pulse1.area, e0)[:, 0]
        pk = psi1.real**2 + psi1.imag**2
        k = np.arange(prop.dim)
        m1 = float(k @ pk)
        total += wm * (float((k * k) @ pk) - m1 * m1)
    return 4.0 * total


def is_exact_inverse(pulse1: PulseSpec, pulse2: PulseSpec) -> bool:
    dphi = (pulse2.phi - pulse1.phi) % (2.0 * np.pi)
    return pulse2.area == -pulse1.area and (dphi < 1e-12 or 2.0 * np.pi - dphi < 1e-12)


def theta_evaluation_points(
    probe: PoissonMixture,
    pulse1: PulseSpec,
    pulse2: PulseSpec,
    theta_grid: np.ndarray | None = None,
    threads: int | None = None,
) -> tuple[np.ndarray, float, bool]:
    """(points, center, inverse?) where the FI is worth evaluating.

    Exact inverse: fringe center 0, the grid itself. Anything else: the grid
    applied as symmetric offsets around the located fringe center.
    """
    grid = default_theta_grid() if theta_grid is None else np.asarray(theta_grid, float)
    if is_exact_inverse(pulse1, pulse2):
        return grid, 0.0, True
    center = fringe_center(probe, pulse1, pulse2, threads=threads)
    points = np.unique(np.concatenate([center - grid[::-1], center + grid]))
    return points, center, False


def fisher_opt(
    probe: PoissonMixture,
    pulse1: PulseSpec,
    pulse2: PulseSpec,
    theta_grid: np.ndarray | None = None,
    threads: int | None = None,
) -> tuple[float, float]:
    """Maximum Fisher information over phase, and the phase attaining it.

    For the exact-inverse configuration the theta -> 0 limit is included
    analytically (the grid cannot reach the 0/0 compensation point).
    """
    points, center, inverse = theta_evaluation_points(
        probe, pulse1, pulse2, theta_grid, threads=threads
    )
    if pulse1.area == 0.0:
        return 0.0, 0.0
    P, dP = sequence_distribution_grid(probe, pulse1, pulse2, points, threads=threads)
    fs = np.array([fisher_from_arrays(P[i], dP[i]) for i in range(len(points))])
    i = int(np.argmax(fs))
    best, theta_opt = float(fs[i]), float(points[i])
    if inverse:
        f0 = fisher_at_zero(probe, pulse1, threads=threads)
        if f0 >= best:
            best, theta_opt = f0, 0.0
    return best, theta_opt


def error_propagation(dist: OutputDistribution) -> float:
    """Delta theta from the output mean slope and standard deviation.

    Invariant under rescaling of the observable (k vs 2k). Raises
    ZeroSlopeError at stationary points of the fringe.
    """
    if dist.dp_dtheta is None:
        raise ValueError("distribution carries no derivative channel")
    mean, var = output_moments(dist)
    k = np.arange(len(dist.p))
    slope = float(k @ dist.dp_dtheta)
    if abs(slope) < 1e-12:
        raise ZeroSlopeError(
            f"d<k>/dtheta = {slope:.3e} at theta = {dist.theta}: sensitivity diverges"
        )
    return float(np.sqrt(max(var, 0.0)) / abs(slope))


def estimate(dist: OutputDistribution, m: int = 1) -> EstimationResult:
    if m < 1:
        raise ValueError(f"repetition count must be >= 1, got {m}")
    F = fisher_information(dist)
    crb = 1.0 / np.sqrt(m * F) if F > 0 else np.inf
    try:
        ep = error_propagation(dist) / np.sqrt(m)
    except ZeroSlopeError:
        ep = np.inf
    return EstimationResult(theta=dist.theta, fisher=F, crb=crb, ep=ep, m=m)


def _fopt_noiseless(nbar, eta, convention, theta_grid, epsilon, threads):
    pulse1 = solve_pulse_for_eta(nbar, eta, epsilon=epsilon)
    probe = poisson_sectors(nbar, epsilon)
    return fisher_opt(probe, pulse1, second_pulse(pulse1, convention), theta_grid, threads)


def _fopt_detection(nbar, eta, convention, detection, theta_grid, epsilon, threads):
    from .noise import smear_distribution_arrays, fisher_detection_arrays

    pulse1 = solve_pulse_for_eta(nbar, eta, epsilon=epsilon)
    probe = poisson_sectors(nbar, epsilon)
    pulse2 = second_pulse(pulse1, convention)
    points, _, _ = theta_evaluation_points(probe, pulse1, pulse2, theta_grid, threads)
    P, dP = sequence_distribution_grid(probe, pulse1, pulse2, points, threads=threads)
    best, theta_opt = 0.0, 0.0
    for i in range(len(points)):
        x, Ps, dPs = smear_distribution_arrays(P[i], dP[i], detection)
        F = fisher_detection_arrays(x, Ps, dPs)
        if F > best:
            best, theta_opt = F, float(points[i])
    return best, theta_opt


def _fopt_lossy(nbar, eta, convention, loss, theta_grid, epsilon, threads):
    from .noise import lossy_distribution_grid

    pulse1 = solve_pulse_for_eta(nbar, eta, epsilon=epsilon)
    probe = poisson_sectors(nbar, epsilon)
    pulse2 = second_pulse(pulse1, convention)
    grid = lossy_theta_grid() if theta_grid is None else np.asarray(theta_grid, float)
    if convention != "inverse":
        center = fringe_center(probe, pulse1, pulse2, threads=threads)
        grid = np.unique(np.concatenate([center - grid[::-1], center + grid]))
    P, dP, _ = lossy_distribution_grid(probe, pulse1, pulse2, grid, loss, threads=threads)
    fs = [fisher_from_arrays(P[i], dP[i]) for i in range(len(grid))]
    i = int(np.argmax(fs))
    return float(fs[i]), float(grid[i])


def fopt_at(
    eta: float,
    nbar: float,
    convention: str = "inverse",
    detection=None,
    loss=None,
    theta_grid: np.ndarray | None = None,
    epsilon: float = 1e-10,
    threads: int | None = None,
) -> tuple[float, float]:
    """(F_opt, theta_opt) at one (eta, nbar) point under the given noise."""
    if loss is not None:
        return _fopt_lossy(nbar, eta, convention, loss, theta_grid, epsilon, threads)
    if detection is not None:
        return _fopt_detection(nbar, eta, convention, detection, theta_grid, epsilon, threads)
    return _fopt_noiseless(nbar, eta, convention, theta_grid, epsilon, threads)


def ssn_critical_n(
    eta: float,
    convention: str = "inverse",
    detection=None,
    loss=None,
    nbar_max: int = 20000,
    nbar_start: int = 4,
    theta_grid: np.ndarray | None = None,
    epsilon: float = 1e-10,
    threads: int | None = None,
) -> int:
    """Smallest integer nbar with F_opt(nbar, eta) > nbar at fixed eta.

    Exponential bracketing then integer bisection; the pulse area is
    re-solved for the target eta at every candidate nbar. detection and
    loss configs are mutually exclusive noise channels.
    """
    if detection is not None and loss is not None:
        raise ValueError("pass either a detection or a loss config, not both")

    def ssn(nb: int) -> bool:
        try:
            F, _ = fopt_at(eta, float(nb), convention, detection, loss,
                           theta_grid, epsilon, threads)
            return F > nb
        except UnreachableEtaError:
            return False

    hi = max(4, int(nbar_start))
    lo = None
    while not ssn(hi):
        lo = hi
        hi *= 2
        if hi > nbar_max:
            raise NoSSNError(f"no SSN found for eta={eta} up to nbar={nbar_max}")
    if lo is None:
        # walk down to the smallest integer still satisfying the definition
        n = hi
        while n > 1 and ssn(n - 1):
            n -= 1
        return n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ssn(mid):
            hi = mid
        else:
            lo = mid
    return hi


def ssn_critical_n_meanfield_detection(
    eta: float,
    sigma: float,
    nbar_max: int = 20000,
    nbar_start: int = 16,
    theta_grid: np.ndarray | None = None,
) -> int:
    """Critical atom number from the closed-form distribution family plus
    Gaussian detection smearing (semianalytic pipeline, Ncal = eta*nbar)."""
    from .meanfield import mf_distribution
    from .noise import DetectionConfig, smear_distribution_arrays, fisher_detection_arrays

    det = DetectionConfig(sigma=sigma)
    grid = (
        np.concatenate([np.geomspace(1e-3, 0.3, 25), np.linspace(0.35, np.pi, 25)])
        if theta_grid is None
        else np.asarray(theta_grid, float)
    )

    def fopt(nb: int) -> float:
        Ncal = eta * nb
        best = 0.0
        for th in grid:
            P, dP = mf_distribution(Ncal, float(th))
            x, Ps, dPs = smear_distribution_arrays(P, dP, det)
            best = max(best, fisher_detection_arrays(x, Ps, dPs))
        return best

    lo, hi = None, max(4, int(nbar_start))
    while not fopt(hi) > hi:
        lo = hi
        hi *= 2
        if hi > nbar_max:
            raise NoSSNError(f"no SSN found for eta={eta}, sigma={sigma} up to {nbar_max}")
    if lo is None:
        n = hi
        while n > 1 and fopt(n - 1) > n - 1:
            n -= 1
        return n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fopt(mid) > mid:
            hi = mid
        else:
            lo = mid
    return hi
