"""Hot kernels: fixed-step RK4 integration of the non-Hermitian no-jump
drift with quantum-jump handling, per sector.

Two interchangeable backends share one algorithm, operation for operation:

* numba ``@njit(nogil=True)`` (default when numba imports cleanly)
* pure numpy (set ``SPINMIX_BACKEND=numpy``)

``benchmarks/bench_kernels.py`` times both on the same workload.

State layout: ``amp`` is a complex buffer of the *initial* sector dimension;
after j pair-loss jumps only the prefix of length ``dim = floor(M/2) + 1``
is active (k labels are preserved by the jump, the sector total drops by 2
and the highest k slot empties). Error codes returned by the segment:

    0  ok
    1  single-step norm drop exceeded 10% (dt too coarse)
    2  uniform pool exhausted (caller re-runs with a larger pool)
    3  norm grew (RK4 instability; dt too large for the spectral radius)
    4  degenerate jump (vanishing jump weight)
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = ["BACKEND", "mcwf_segment", "gershgorin_radius"]

ERR_OK = 0
ERR_NORM_DROP = 1
ERR_POOL = 2
ERR_NORM_GREW = 3
ERR_DEGENERATE_JUMP = 4


def _backend_choice() -> str:
    want = os.environ.get("SPINMIX_BACKEND", "").strip().lower()
    if want == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if want == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _backend_choice()


def gershgorin_radius(M: int, g: float = 0.0) -> float:
    """Upper bound on the spectral radius of the no-jump drift for sector M."""
    k = np.arange(M // 2 + 1, dtype=np.float64)
    diag = np.abs((M - 2 * k - 0.5) * (2.0 * k))
    n0 = M - 2 * k
    offd = (k[:-1] + 1) * np.sqrt(n0[:-1] * (n0[:-1] - 1.0))
    r = diag.copy()
    if len(offd):
        r[:-1] += offd
        r[1:] += offd
    if g > 0 and M >= 2:
        r += 0.5 * g * n0 * (n0 - 1.0)
    return float(r.max())


def _segment_python(amp, M, dim, h_sign, g, steps, dt, uniforms, uidx, r,
                    snap_steps, snap_out):
    """Numpy twin of the numba segment; identical operation order."""
    n = dim
    k = np.arange(n, dtype=np.float64)
    dh = (M - 2.0 * k - 0.5) * (2.0 * k)
    n0 = M - 2.0 * k
    dl = n0 * (n0 - 1.0)
    dl[dl < 0] = 0.0
    od = (k[:-1] + 1.0) * np.sqrt(dl[:-1])
    cd = -0.5 * g * dl - 1j * h_sign * dh
    co = -1j * h_sign * od

    def rhs(y):
        t = cd[:n] * y
        t[1:] = t[1:] + co[: n - 1] * y[:-1]
        t[:-1] = t[:-1] + co[: n - 1] * y[1:]
        return t

    y = amp[:n]
    norm_old = float(np.sum(y.real**2 + y.imag**2))
    snap_ptr = 0
    for s in range(1, steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + (0.5 * dt) * k1)
        k3 = rhs(y + (0.5 * dt) * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        amp[:n] = y
        norm = float(np.sum(y.real**2 + y.imag**2))
        if norm > norm_old * (1.0 + 1e-9):
            return M, n, uidx, r, ERR_NORM_GREW
        if norm < 0.9 * norm_old:
            return M, n, uidx, r, ERR_NORM_DROP
        norm_old = norm
        if norm < r:
            # pair-loss jump: amp_k *= sqrt((M-2k)(M-2k-1)), M -> M-2
            w = np.sqrt(dl[:n])
            y = y * w
            M -= 2
            n -= 1
            amp[n:] = 0.0
            y = y[:n]
            jn = float(np.sum(y.real**2 + y.imag**2))
            if jn <= 0.0:
                return M, n, uidx, r, ERR_DEGENERATE_JUMP
            y = y / math.sqrt(jn)
            amp[:n] = y
            norm_old = 1.0
            if uidx >= len(uniforms):
                return M, n, uidx, r, ERR_POOL
            r = uniforms[uidx]
            uidx += 1
            kk = np.arange(n, dtype=np.float64)
            dh = (M - 2.0 * kk - 0.5) * (2.0 * kk)
            n0 = M - 2.0 * kk
            dl = n0 * (n0 - 1.0)
            dl[dl < 0] = 0.0
            od = (kk[:-1] + 1.0) * np.sqrt(dl[:-1])
            cd = -0.5 * g * dl - 1j * h_sign * dh
            co = -1j * h_sign * od
        if snap_ptr < len(snap_steps) and snap_steps[snap_ptr] == s:
            p = y.real**2 + y.imag**2
            tot = float(np.sum(p))
            snap_out[snap_ptr] = float(np.arange(n) @ p) / tot if tot > 0 else 0.0
            snap_ptr += 1
    return M, n, uidx, r, ERR_OK


if BACKEND == "numba":
    from numba import njit

    @njit(cache=True, nogil=True)
    def _segment_numba(amp, M, dim, h_sign, g, steps, dt, uniforms, uidx, r,
                       snap_steps, snap_out):
        n = dim
        nmax = amp.shape[0]
        dh = np.empty(nmax, np.float64)
        dl = np.empty(nmax, np.float64)
        od = np.empty(nmax, np.float64)
        cd = np.empty(nmax, np.complex128)
        co = np.empty(nmax, np.complex128)
        k1 = np.empty(nmax, np.complex128)
        k2 = np.empty(nmax, np.complex128)
        k3 = np.empty(nmax, np.complex128)
        k4 = np.empty(nmax, np.complex128)
        yt = np.empty(nmax, np.complex128)

        for i in range(n):
            kk = float(i)
            dh[i] = (M - 2.0 * kk - 0.5) * (2.0 * kk)
            d = (M - 2.0 * kk) * (M - 2.0 * kk - 1.0)
            dl[i] = d if d > 0.0 else 0.0
            cd[i] = complex(-0.5 * g * dl[i], -h_sign * dh[i])
        for i in range(n - 1):
            od[i] = (i + 1.0) * math.sqrt(dl[i])
            co[i] = complex(0.0, -h_sign * od[i])

        norm_old = 0.0
        for i in range(n):
            norm_old += amp[i].real ** 2 + amp[i].imag ** 2
        snap_ptr = 0

        for s in range(1, steps + 1):
            for i in range(n):
                acc = cd[i] * amp[i]
                if i > 0:
                    acc = acc + co[i - 1] * amp[i - 1]
                if i < n - 1:
                    acc = acc + co[i] * amp[i + 1]
                k1[i] = acc
            for i in range(n):
                yt[i] = amp[i] + (0.5 * dt) * k1[i]
            for i in range(n):
                acc = cd[i] * yt[i]
                if i > 0:
                    acc = acc + co[i - 1] * yt[i - 1]
                if i < n - 1:
                    acc = acc + co[i] * yt[i + 1]
                k2[i] = acc
            for i in range(n):
                yt[i] = amp[i] + (0.5 * dt) * k2[i]
            for i in range(n):
                acc = cd[i] * yt[i]
                if i > 0:
                    acc = acc + co[i - 1] * yt[i - 1]
                if i < n - 1:
                    acc = acc + co[i] * yt[i + 1]
                k3[i] = acc
            for i in range(n):
                yt[i] = amp[i] + dt * k3[i]
            for i in range(n):
                acc = cd[i] * yt[i]
                if i > 0:
                    acc = acc + co[i - 1] * yt[i - 1]
                if i < n - 1:
                    acc = acc + co[i] * yt[i + 1]
                k4[i] = acc
            for i in range(n):
                amp[i] = amp[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

            norm = 0.0
            for i in range(n):
                norm += amp[i].real ** 2 + amp[i].imag ** 2
            if norm > norm_old * (1.0 + 1e-9):
                return M, n, uidx, r, ERR_NORM_GREW
            if norm < 0.9 * norm_old:
                return M, n, uidx, r, ERR_NORM_DROP
            norm_old = norm

            if norm < r:
                for i in range(n):
                    amp[i] = amp[i] * math.sqrt(dl[i])
                M -= 2
                n -= 1
                for i in range(n, nmax):
                    amp[i] = 0.0
                jn = 0.0
                for i in range(n):
                    jn += amp[i].real ** 2 + amp[i].imag ** 2
                if jn <= 0.0:
                    return M, n, uidx, r, ERR_DEGENERATE_JUMP
                inv = 1.0 / math.sqrt(jn)
                for i in range(n):
                    amp[i] = amp[i] * inv
                norm_old = 1.0
                if uidx >= uniforms.shape[0]:
                    return M, n, uidx, r, ERR_POOL
                r = uniforms[uidx]
                uidx += 1
                for i in range(n):
                    kk = float(i)
                    dh[i] = (M - 2.0 * kk - 0.5) * (2.0 * kk)
                    d = (M - 2.0 * kk) * (M - 2.0 * kk - 1.0)
                    dl[i] = d if d > 0.0 else 0.0
                    cd[i] = complex(-0.5 * g * dl[i], -h_sign * dh[i])
                for i in range(n - 1):
                    od[i] = (i + 1.0) * math.sqrt(dl[i])
                    co[i] = complex(0.0, -h_sign * od[i])

            if snap_ptr < snap_steps.shape[0] and snap_steps[snap_ptr] == s:
                tot = 0.0
                acc_k = 0.0
                for i in range(n):
                    p = amp[i].real ** 2 + amp[i].imag ** 2
                    tot += p
                    acc_k += i * p
                snap_out[snap_ptr] = acc_k / tot if tot > 0.0 else 0.0
                snap_ptr += 1

        return M, n, uidx, r, ERR_OK

    mcwf_segment = _segment_numba
else:
    mcwf_segment = _segment_python

_EMPTY_SNAPS = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64))


def run_segment(amp, M, dim, h_sign, g, duration, dt, uniforms, uidx, r,
                snap_steps=None, snap_out=None):
    """Dispatch one no-jump/jump segment of the given duration.

    Chooses the step count so the last step lands exactly on `duration`;
    returns (M, dim, uidx, r, err, steps).
    """
    if duration == 0.0:
        return M, dim, uidx, r, ERR_OK, 0
    steps = max(1, int(math.ceil(duration / dt)))
    if snap_steps is None:
        snap_steps, snap_out = _EMPTY_SNAPS
    M, dim, uidx, r, err = mcwf_segment(
        amp, M, dim, h_sign, g, steps, duration / steps, uniforms, uidx, r,
        snap_steps, snap_out,
    )
    return M, dim, uidx, r, err, steps
