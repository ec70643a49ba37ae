"""Closed-form parametric (undepleted-pump) predictions.

Valid for chi*t -> 0, nbar -> infinity with chi*t*sqrt(nbar) << 1. These
serve as oracles for the exact sector dynamics and as semianalytic
references for the critical atom numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MeanFieldPoint",
    "mf_pair_number",
    "mf_pulse_area",
    "mf_probability",
    "mf_distribution",
    "mf_fisher",
    "mf_output_moments",
    "mf_critical_n",
    "mf_critical_n_detection",
    "validity_parameter",
]


@dataclass(frozen=True)
class MeanFieldPoint:
    nbar: float
    area: float
    Ncal: float
    validity: float


def mf_pair_number(nbar: float, area: float) -> float:
    """Mean side-mode population after one pulse of the given area.

    Ncal = 8 nbar^2/(4 nbar - 1) * sinh^2( sqrt(4 nbar - 1)/2 * chi t ).
    """
    if nbar < 1:
        raise ValueError(f"parametric form needs nbar >= 1, got {nbar}")
    r = np.sqrt(4.0 * nbar - 1.0)
    return float(8.0 * nbar**2 / (4.0 * nbar - 1.0) * np.sinh(0.5 * r * area) ** 2)


def mf_pulse_area(nbar: float, eta: float) -> float:
    """Analytic inverse of mf_pair_number: area giving Ncal = eta*nbar."""
    if not 0 <= eta:
        raise ValueError(f"eta must be non-negative, got {eta}")
    r2 = 4.0 * nbar - 1.0
    return float(2.0 / np.sqrt(r2) * np.arcsinh(np.sqrt(eta * r2 / (8.0 * nbar))))


def meanfield_point(nbar: float, area: float) -> MeanFieldPoint:
    return MeanFieldPoint(
        nbar=nbar,
        area=area,
        Ncal=mf_pair_number(nbar, area),
        validity=validity_parameter(nbar, area),
    )


def mf_probability(Ncal: float, k, theta: float):
    """Conditional probability of measuring k pairs at phase theta.

    P = 2 x^k / (x+2)^{k+1} with x = Ncal(Ncal+2)(1-cos theta), evaluated in
    log space; 0^0 == 1 at theta=0 or k=0 keeps the distribution continuous.
    """
    if Ncal < 0:
        raise ValueError(f"Ncal must be non-negative, got {Ncal}")
    k = np.asarray(k)
    x = Ncal * (Ncal + 2.0) * (1.0 - np.cos(theta))
    if x == 0.0:
        out = np.where(k == 0, 1.0, 0.0)
    else:
        out = np.exp(np.log(2.0) + k * np.log(x) - (k + 1) * np.log(x + 2.0))
    return float(out) if out.ndim == 0 else out


def mf_distribution(
    Ncal: float, theta: float, kmax: int | None = None, tail: float = 1e-14
) -> tuple[np.ndarray, np.ndarray]:
    """(P, dP/dtheta) arrays of the closed-form outcome distribution.

    kmax defaults to wherever the geometric tail falls below `tail`.
    """
    x = Ncal * (Ncal + 2.0) * (1.0 - np.cos(theta))
    if kmax is None:
        if x == 0.0:
            kmax = 1
        else:
            ratio = x / (x + 2.0)
            kmax = 30 + int(np.ceil(np.log(tail) / np.log(ratio)))
    k = np.arange(kmax + 1)
    P = mf_probability(Ncal, k, theta)
    if x == 0.0:
        dP = np.zeros_like(P)
    else:
        dx = Ncal * (Ncal + 2.0) * np.sin(theta)
        dP = P * (k / x - (k + 1) / (x + 2.0)) * dx
    return P, dP


def mf_fisher(Ncal: float, theta: float) -> float:
    """Fisher information of the closed-form distribution family."""
    if Ncal < 0:
        raise ValueError(f"Ncal must be non-negative, got {Ncal}")
    G = Ncal * (Ncal + 2.0)
    s2 = np.sin(0.5 * theta) ** 2
    return float(G * np.cos(0.5 * theta) ** 2 / (G * s2 + 1.0))


def mf_output_moments(Ncal: float, theta: float) -> tuple[float, float]:
    """Mean and variance of the measured pair number at phase theta.

    mean = Ncal(Ncal+2) sin^2(theta/2); the variance is the geometric-law
    mu(mu+1), i.e. the squeezed-state variance formula with the *total*
    side-mode variance 4*(Ncal/2)(Ncal/2+1) = Ncal(Ncal+2) as its scale
    (the single-mode value is inconsistent with the distribution moments).
    """
    mu = Ncal * (Ncal + 2.0) * np.sin(0.5 * theta) ** 2
    return float(mu), float(mu * (mu + 1.0))


def mf_critical_n(eta: float) -> float:
    """Critical mean atom number (1 - 2 eta)/eta^2 for sub-shot-noise onset."""
    if not 0 < eta < 0.5:
        raise ValueError(f"eta must lie in (0, 1/2), got {eta}")
    return (1.0 - 2.0 * eta) / eta**2


def mf_critical_n_detection(eta: float, sigma: float) -> float:
    """Leading-order critical atom number 2 sigma/eta^2 under detection noise.

    Derived for sigma >~ 1 and small eta; callers should flag results
    outside that range as extrapolation.
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return 2.0 * sigma / eta**2


def validity_parameter(nbar: float, area: float) -> float:
    """chi*t*sqrt(nbar); the parametric description needs this << 1."""
    return float(abs(area) * np.sqrt(nbar))
