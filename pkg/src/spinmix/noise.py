"""Two-body losses in the central mode (Monte Carlo wave functions) and
Gaussian detection-noise smearing of the measured pair number.

Loss model: jump operator L = sqrt(gamma) a0^2 with non-Hermitian drift
-(i gamma/2) a0^dag^2 a0^2, fixed by requiring the chi = 0 ensemble mean to
follow <N0(t)> = nbar/(1 + 2 gamma t nbar) (d<N0>/dt = -2 gamma <N0(N0-1)>).
A jump maps |k, M-2k, k> -> sqrt((M-2k)(M-2k-1)) |k, M-2k-2, k>: the sector
total drops by two, the pair label is untouched, so the symmetric subspace
is preserved at all times. Losses act during the mixing pulses only (phase
encoding is assumed fast).

Reproducibility: trajectory i uses numpy's default_rng(seed + i); partial
sums are accumulated in fixed-size index-ordered chunks, so distributions
are bit-identical across reruns and thread counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import (
    ERR_OK,
    ERR_POOL,
    gershgorin_radius,
    run_segment,
)
from ._parallel import chunked_map
from .dynamics import PulseSpec
from .hilbert import PoissonMixture, SectorState, sector_basis
from .interferometer import OutputDistribution, SequenceSpec

__all__ = [
    "LossConfig",
    "DetectionConfig",
    "IntegratorError",
    "SmearedDistribution",
    "mean_n0_decay",
    "mcwf_trajectory",
    "lossy_output_distribution",
    "lossy_distribution_grid",
    "lossy_transfer_curve",
    "decay_mean_n0",
    "apply_pair_loss",
    "convolve_detection",
    "fisher_detection",
    "smear_distribution_arrays",
    "fisher_detection_arrays",
]

_CHUNK = 64  # trajectories per reduction chunk; fixed for bit stability


class IntegratorError(RuntimeError):
    """Fixed-step integration violated its norm-drop/growth contract."""


@dataclass(frozen=True)
class LossConfig:
    """Two-body loss channel: rate ratio, trajectory budget, seeding, step.

    dt is in units of 1/(chi sqrt(nbar)); the actual step is additionally
    capped by the RK4 stability radius of the sector and by the requirement
    that the no-jump norm decays <= ~4% per step.
    """

    gamma_over_chi: float
    n_traj: int = 2000
    seed: int = 0
    dt: float = 0.005

    def __post_init__(self):
        if self.gamma_over_chi < 0:
            raise ValueError("gamma_over_chi must be >= 0")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class DetectionConfig:
    """Gaussian smearing of the measured pair number.

    The applied quadrature step is snapped to 1/m <= sigma*grid_step so
    integer outcomes land on grid nodes. Smearing acts on the single
    readout variable k (= N_+1 = N_-1).
    """

    sigma: float
    grid_halfwidth: float = 6.0
    grid_step: float = 0.05  # in units of sigma

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.sigma > 0 and self.grid_step > 0.1 + 1e-12:
            raise ValueError("grid_step must be <= sigma/10 (0.1 in sigma units)")


@dataclass
class SmearedDistribution:
    x: np.ndarray
    p: np.ndarray
    dp_dtheta: np.ndarray | None
    theta: float
    step: float
    meta: dict = field(default_factory=dict)


def mean_n0_decay(nbar: float, gamma_t: float) -> float:
    """Central-mode population under pure pair loss: nbar/(1 + 2 gamma t nbar)."""
    if nbar < 0 or gamma_t < 0:
        raise ValueError("nbar and gamma_t must be >= 0")
    return nbar / (1.0 + 2.0 * gamma_t * nbar)


def apply_pair_loss(state: SectorState) -> SectorState:
    """One pair-loss jump, a0^2, renormalized; M -> M-2 with k unchanged."""
    M = state.basis.M
    if M < 2:
        raise ValueError(f"no pair can be lost from sector M={M}")
    new_basis = sector_basis(M - 2)
    k = np.arange(new_basis.dim)
    n0 = M - 2 * k
    amp = state.amp[: new_basis.dim] * np.sqrt(n0 * (n0 - 1.0))
    nrm = np.linalg.norm(amp)
    if nrm == 0:
        raise ValueError("jump weight vanishes: no atoms left in the central mode")
    return SectorState(new_basis, amp / nrm)


# per-step no-jump norm-drop target; jumps land at step ends, so the decay
# mean carries an O(drop) late-jump bias (measured +0.5% of the lost atoms
# at 0.05) - keep well under the 10% error contract
_DROP_TARGET = 0.04


def _trajectory_dt(M0: int, nbar_ref: float, loss: LossConfig, mixing: bool) -> float:
    g = loss.gamma_over_chi
    dt = loss.dt / math.sqrt(max(nbar_ref, 1.0))
    if mixing and M0 >= 2:
        dt = min(dt, 2.0 / gershgorin_radius(M0, g))
    if g > 0 and M0 >= 2:
        dt = min(dt, _DROP_TARGET / (g * M0 * (M0 - 1)))
    return dt


def _pool_size(M0: int, g: float, duration: float) -> int:
    if g <= 0 or M0 < 2:
        return 8
    expected = 0.5 * (M0 - M0 / (1.0 + 2.0 * g * duration * M0))
    return 64 + int(6.0 * expected + 10.0 * math.sqrt(expected + 1.0))


def _enumerate_quotas(probe: PoissonMixture, n_traj: int) -> list[tuple[int, int]]:
    """(M, quota) with quota >= 1 per retained sector, largest-remainder split.

    Every trajectory in sector M carries weight w_M/quota_M, so the gamma=0
    limit reproduces the exact mixture whatever the quotas.
    """
    raw = probe.weights * n_traj
    quotas = np.floor(raw).astype(int)
    remainder = n_traj - int(quotas.sum())
    if remainder > 0:
        order = np.argsort(-(raw - quotas), kind="stable")
        quotas[order[:remainder]] += 1
    quotas = np.maximum(quotas, 1)
    return [(int(M), int(q)) for M, q in zip(probe.totals, quotas)]


def _trajectory_plan(probe, loss, mode):
    """Per-trajectory (index, M0, weight) tuples, deterministic in the seed."""
    plan = []
    if mode == "enumerate":
        idx = 0
        for M, q in _enumerate_quotas(probe, loss.n_traj):
            w = probe.weights[np.searchsorted(probe.totals, M)] / q
            for _ in range(q):
                plan.append((idx, M, float(w)))
                idx += 1
    elif mode == "sample":
        for i in range(loss.n_traj):
            rng = np.random.default_rng(loss.seed + i)
            plan.append((i, int(rng.poisson(probe.nbar)), 1.0 / loss.n_traj))
    else:
        raise ValueError(f"unknown sector mode {mode!r}; use 'enumerate' or 'sample'")
    return plan


def _run_trajectory_branches(index, M0, theta_effs, a1, a2, g, dt, seed,
                             sample_mode, nbar):
    """Pulse 1 once, then each phase branch through pulse 2; returns the
    renormalized outcome probabilities per branch, or raises IntegratorError."""
    dim0 = M0 // 2 + 1
    pool = _pool_size(M0, g, abs(a1) + abs(a2))
    while True:
        rng = np.random.default_rng(seed + index)
        if sample_mode:
            rng.poisson(nbar)  # consume the sector draw so pools line up
        uniforms = rng.random(pool)
        amp = np.zeros(dim0, dtype=np.complex128)
        amp[0] = 1.0
        r = uniforms[0]
        M, dim, uidx, r, err, _ = run_segment(
            amp, M0, dim0, math.copysign(1.0, a1) if a1 else 0.0, g,
            abs(a1), dt, uniforms, 1, r,
        )
        if err == ERR_POOL:
            pool *= 2
            continue
        if err != ERR_OK:
            raise IntegratorError(
                f"trajectory {index} (M0={M0}) failed in pulse 1 with code {err}"
            )
        out = np.zeros((len(theta_effs), dim0))
        k = np.arange(dim0)
        exhausted = False
        for b, th in enumerate(theta_effs):
            amp_b = amp * np.exp(-1j * th * k)
            Mb, dimb, ub, rb, err, _ = run_segment(
                amp_b, M, dim, math.copysign(1.0, a2) if a2 else 0.0, g,
                abs(a2), dt, uniforms, uidx, r,
            )
            if err == ERR_POOL:
                exhausted = True
                break
            if err != ERR_OK:
                raise IntegratorError(
                    f"trajectory {index} (M0={M0}) failed in pulse 2 with code {err}"
                )
            p = amp_b.real**2 + amp_b.imag**2
            tot = p.sum()
            out[b, :] = p / tot if tot > 0 else p
        if exhausted:
            pool *= 2
            continue
        return out


def lossy_distribution_grid(
    probe: PoissonMixture,
    pulse1: PulseSpec,
    pulse2: PulseSpec,
    thetas,
    loss: LossConfig,
    mode: str = "enumerate",
    theta_delta: float = 1e-3,
    threads: int | None = None,
):
    """(P, dP, meta) over the theta grid from paired-seed trajectories.

    Each requested theta is run as a common-random-number triplet
    (theta-delta, theta, theta+delta): the central branch gives P, the side
    branches the finite-difference derivative. All branches of a trajectory
    share the post-pulse-1 state and the same uniform pool.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    shift = 2.0 * (pulse2.phi - pulse1.phi)
    branches = np.concatenate(
        [[t + shift - theta_delta, t + shift, t + shift + theta_delta] for t in thetas]
    )
    plan = _trajectory_plan(probe, loss, mode)
    kmax = max(M0 for _, M0, _ in plan) // 2
    g = loss.gamma_over_chi
    sample_mode = mode == "sample"

    def worker(chunk):
        acc = np.zeros((len(branches), kmax + 1))
        for index, M0, w in chunk:
            dt = _trajectory_dt(M0, probe.nbar, loss, mixing=True)
            out = _run_trajectory_branches(
                index, M0, branches, pulse1.area, pulse2.area, g, dt,
                loss.seed, sample_mode, probe.nbar,
            )
            acc[:, : out.shape[1]] += w * out
        return acc

    partials = chunked_map(worker, plan, threads=threads, chunk=_CHUNK)
    total = sum(partials)
    P = total[1::3]
    dP = (total[2::3] - total[0::3]) / (2.0 * theta_delta)
    meta = {
        "mode": mode,
        "seed": loss.seed,
        "n_traj": len(plan),
        "gamma_over_chi": g,
        "theta_delta": theta_delta,
        "dt_config": loss.dt,
    }
    return P, dP, meta


def lossy_output_distribution(
    probe: PoissonMixture,
    seq: SequenceSpec,
    loss: LossConfig,
    mode: str = "enumerate",
    theta_delta: float = 1e-3,
    threads: int | None = None,
) -> OutputDistribution:
    P, dP, meta = lossy_distribution_grid(
        probe, seq.pulse1, seq.pulse2, [seq.theta], loss,
        mode=mode, theta_delta=theta_delta, threads=threads,
    )
    return OutputDistribution(p=P[0], dp_dtheta=dP[0], theta=seq.theta, meta=meta)


def mcwf_trajectory(
    M0: int,
    seq: SequenceSpec,
    loss: LossConfig,
    traj_index: int = 0,
    nbar_ref: float | None = None,
) -> SectorState:
    """One stochastic trajectory through the full sequence.

    Returns the renormalized final state; its basis carries the final sector
    total (M0 minus twice the number of jumps). The phase stage is lossless.
    """
    nbar_ref = float(M0) if nbar_ref is None else nbar_ref
    dt = _trajectory_dt(M0, nbar_ref, loss, mixing=True)
    theta_eff = seq.theta + 2.0 * (seq.pulse2.phi - seq.pulse1.phi)
    g = loss.gamma_over_chi
    a1, a2 = seq.pulse1.area, seq.pulse2.area
    dim0 = M0 // 2 + 1
    pool = _pool_size(M0, g, abs(a1) + abs(a2))
    while True:
        rng = np.random.default_rng(loss.seed + traj_index)
        uniforms = rng.random(pool)
        amp = np.zeros(dim0, dtype=np.complex128)
        amp[0] = 1.0
        M, dim, uidx, r, err, _ = run_segment(
            amp, M0, dim0, math.copysign(1.0, a1) if a1 else 0.0,
            g, abs(a1), dt, uniforms, 1, uniforms[0],
        )
        if err == ERR_POOL:
            pool *= 2
            continue
        if err != ERR_OK:
            raise IntegratorError(f"trajectory failed in pulse 1 with code {err}")
        amp *= np.exp(-1j * theta_eff * np.arange(dim0))
        M, dim, uidx, r, err, _ = run_segment(
            amp, M, dim, math.copysign(1.0, a2) if a2 else 0.0,
            g, abs(a2), dt, uniforms, uidx, r,
        )
        if err == ERR_POOL:
            pool *= 2
            continue
        if err != ERR_OK:
            raise IntegratorError(f"trajectory failed in pulse 2 with code {err}")
        final = amp[:dim]
        nrm = np.linalg.norm(final)
        return SectorState(sector_basis(M), final / nrm if nrm > 0 else final)


def lossy_transfer_curve(
    nbar: float,
    loss: LossConfig,
    area_grid,
    probe: PoissonMixture | None = None,
    mode: str = "enumerate",
    threads: int | None = None,
) -> np.ndarray:
    """Transfer fraction eta after the first pulse, under losses, vs area.

    Snapshots are taken along a single integration per trajectory; eta is
    2<k>/nbar with <k> on the renormalized state, ensemble averaged.
    """
    from .hilbert import poisson_sectors

    areas = np.asarray(area_grid, dtype=float)
    if np.any(areas < 0) or np.any(np.diff(areas) < 0):
        raise ValueError("area_grid must be non-negative and ascending")
    if probe is None:
        probe = poisson_sectors(nbar)
    plan = _trajectory_plan(probe, loss, mode)
    g = loss.gamma_over_chi
    a_max = float(areas[-1])
    if a_max == 0.0:
        return np.zeros_like(areas)
    positive = areas > 0  # eta(0) = 0 exactly, no integration needed
    pos_areas = areas[positive]

    def worker(chunk):
        acc = np.zeros(len(pos_areas))
        for index, M0, w in chunk:
            dim0 = M0 // 2 + 1
            dt = _trajectory_dt(M0, probe.nbar, loss, mixing=True)
            steps_total = max(1, int(math.ceil(a_max / dt)))
            dt_eff = a_max / steps_total
            snap_steps = np.maximum(np.round(pos_areas / dt_eff).astype(np.int64), 1)
            snap_steps = np.minimum(snap_steps, steps_total)
            uniq, inverse = np.unique(snap_steps, return_inverse=True)
            pool = _pool_size(M0, g, a_max)
            while True:
                rng = np.random.default_rng(loss.seed + index)
                if mode == "sample":
                    rng.poisson(probe.nbar)
                uniforms = rng.random(pool)
                amp = np.zeros(dim0, dtype=np.complex128)
                amp[0] = 1.0
                uniq_out = np.zeros(len(uniq))
                M, dim, uidx, r, err, _ = run_segment(
                    amp, M0, dim0, 1.0, g, a_max, dt, uniforms, 1, uniforms[0],
                    snap_steps=uniq, snap_out=uniq_out,
                )
                if err == ERR_POOL:
                    pool *= 2
                    continue
                if err != ERR_OK:
                    raise IntegratorError(
                        f"transfer-curve trajectory {index} (M0={M0}) failed with code {err}"
                    )
                break
            acc += w * 2.0 * uniq_out[inverse]
        return acc

    partials = chunked_map(worker, plan, threads=threads, chunk=_CHUNK)
    out = np.zeros(len(areas))
    out[positive] = sum(partials) / nbar
    return out


def decay_mean_n0(
    nbar: float,
    gamma_t: float,
    n_traj: int = 2000,
    seed: int = 0,
    threads: int | None = None,
) -> tuple[float, float]:
    """Ensemble <N0> after pure pair loss (spin mixing off) for time gamma*t.

    Initial sectors are Poisson-sampled; with the side modes empty each
    trajectory stays at k = 0, so N0 is the surviving sector total. Returns
    (mean, Monte Carlo standard error). Oracle for the decay law
    nbar/(1 + 2 gamma t nbar). Uses a 0.5% norm-drop step so the late-jump
    bias stays far below the Monte Carlo error.
    """
    if gamma_t < 0:
        raise ValueError("gamma_t must be >= 0")

    def one(index: int) -> float:
        rng = np.random.default_rng(seed + index)
        M0 = int(rng.poisson(nbar))
        if M0 < 2 or gamma_t == 0.0:
            return float(M0)
        dim0 = M0 // 2 + 1
        dt = 0.005 / (M0 * (M0 - 1))
        pool = _pool_size(M0, 1.0, gamma_t)
        while True:
            rng = np.random.default_rng(seed + index)
            rng.poisson(nbar)
            uniforms = rng.random(pool)
            amp = np.zeros(dim0, dtype=np.complex128)
            amp[0] = 1.0
            M, dim, uidx, r, err, _ = run_segment(
                amp, M0, dim0, 0.0, 1.0, gamma_t, dt, uniforms, 1, uniforms[0]
            )
            if err == ERR_POOL:
                pool *= 2
                continue
            if err != ERR_OK:
                raise IntegratorError(f"decay trajectory {index} failed with code {err}")
            p = amp.real**2 + amp.imag**2
            tot = p.sum()
            mean_k = float(np.arange(dim0) @ p) / tot
            return M - 2.0 * mean_k

    def worker(chunk):
        vals = np.array([one(i) for i in chunk])
        return np.array([vals.sum(), (vals**2).sum(), len(vals)])

    parts = chunked_map(worker, range(n_traj), threads=threads, chunk=_CHUNK)
    s1, s2, n = np.sum(parts, axis=0)
    mean = s1 / n
    var = max(s2 / n - mean**2, 0.0)
    return float(mean), float(math.sqrt(var / n))


# --- detection noise -------------------------------------------------------


def smear_distribution_arrays(P, dP, det: DetectionConfig):
    """Gaussian-smeared (x, P(x), dP(x)) on a uniform grid with integers on
    grid nodes; dP may be None."""
    if det.sigma <= 0:
        raise ValueError("smearing needs sigma > 0")
    P = np.asarray(P, dtype=float)
    nk = len(P)
    m = int(math.ceil(1.0 / (det.sigma * det.grid_step)))
    h = 1.0 / m
    half = int(math.ceil(det.grid_halfwidth * det.sigma / h))
    offs = np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * ((offs * h) / det.sigma) ** 2) / (
        det.sigma * math.sqrt(2.0 * math.pi)
    )
    n_x = (nk - 1) * m + 2 * half + 1
    x = (np.arange(n_x) - half) * h
    Ps = np.zeros(n_x)
    dPs = np.zeros(n_x) if dP is not None else None
    lastk = (nk - 1) * m + 1
    for j in range(len(offs)):
        Ps[j : j + lastk : m] += P * kernel[j]
        if dPs is not None:
            dPs[j : j + lastk : m] += np.asarray(dP, dtype=float) * kernel[j]
    return x, Ps, dPs


def fisher_detection_arrays(x, Ps, dPs, floor: float = 1e-30) -> float:
    """Fisher information of the smeared distribution by trapezoid quadrature."""
    integrand = np.zeros_like(Ps)
    mask = Ps > floor
    integrand[mask] = dPs[mask] ** 2 / Ps[mask]
    return float(np.trapezoid(integrand, x))


def convolve_detection(dist: OutputDistribution, det: DetectionConfig) -> SmearedDistribution:
    x, Ps, dPs = smear_distribution_arrays(dist.p, dist.dp_dtheta, det)
    return SmearedDistribution(
        x=x, p=Ps, dp_dtheta=dPs, theta=dist.theta, step=float(x[1] - x[0]),
        meta={"sigma": det.sigma, **dist.meta},
    )


def fisher_detection(dist: OutputDistribution, det: DetectionConfig) -> float:
    if dist.dp_dtheta is None:
        raise ValueError("distribution carries no derivative channel")
    x, Ps, dPs = smear_distribution_arrays(dist.p, dist.dp_dtheta, det)
    return fisher_detection_arrays(x, Ps, dPs)
