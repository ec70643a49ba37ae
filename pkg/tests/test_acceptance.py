"""Acceptance suite: every exit criterion at its stated tolerance, one
pass/fail line per criterion (run with -s, or read acceptance_summary.txt).

Known honest failures, analyzed and expected (closed-form tolerances sit
below the first-order pump-depletion corrections the exact dynamics carries
at transferred fraction eta = 2%):

* criterion 1: the outcome distribution is sub-geometric in the tail and
  the Fisher information at theta >= 0.2 exceeds the closed form by 7-13%,
  under any choice of side-mode population parameter;
* criterion 3 (second clause): F(0) sits ~3% below Ncal(Ncal+2), the same
  ~1.3*eta correction the scaling fit of criterion 4 quantifies.

Everything else must pass.
"""

import os

import numpy as np
import pytest

from spinmix import (
    DetectionConfig,
    LossConfig,
    PulseSpec,
    SequenceSpec,
    decay_mean_n0,
    error_propagation,
    fisher_at_zero,
    fisher_information,
    fisher_opt,
    mean_n0_decay,
    mf_critical_n,
    mf_critical_n_detection,
    mf_distribution,
    mf_fisher,
    poisson_sectors,
    run_sequence,
    second_pulse,
    sequence_distribution_grid,
    solve_pulse_for_eta,
    ssn_critical_n,
    ssn_critical_n_meanfield_detection,
    vacuum_probe,
)
from spinmix.dynamics import apply_phase, evolve_smd, evolve_smd_dense
from spinmix.estimation import fisher_from_arrays, lossy_theta_grid
from spinmix.interferometer import transfer_fraction_probe
from spinmix.noise import fisher_detection, lossy_distribution_grid, lossy_output_distribution

SUMMARY_PATH = os.path.join(os.path.dirname(__file__), "..", "acceptance_summary.txt")
_LINES = []


def report(tag, ok, detail):
    line = f"ACCEPTANCE {tag}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, flush=True)
    _LINES.append(line)
    with open(SUMMARY_PATH, "a") as fh:
        fh.write(line + "\n")
    assert ok, line


@pytest.fixture(scope="module", autouse=True)
def _fresh_summary():
    open(SUMMARY_PATH, "w").close()
    yield


@pytest.fixture(scope="module")
def regime():
    """Criterion-1 workspace: nbar=1000, pulse area 0.1/sqrt(nbar)."""
    nbar = 1000.0
    pulse1 = PulseSpec(0.1 / np.sqrt(nbar))
    probe = poisson_sectors(nbar)
    Ncal_fq = transfer_fraction_probe(probe, pulse1) * nbar
    thetas = [0.05, 0.2, 0.5]
    P, dP = sequence_distribution_grid(probe, pulse1, pulse1.inverse(), thetas)
    return probe, pulse1, Ncal_fq, thetas, P, dP


def test_criterion_1a_pair_number(regime):
    from spinmix import mf_pair_number

    probe, pulse1, Ncal_fq, *_ = regime
    ref = mf_pair_number(probe.nbar, pulse1.area)
    rel = abs(Ncal_fq / ref - 1.0)
    report("1a (side-mode population vs closed form)", rel <= 0.02,
           f"Ncal full-quantum {Ncal_fq:.4f} vs {ref:.4f}, rel {rel:.2%} (tol 2%)")


def test_criterion_1b_distribution(regime):
    probe, pulse1, Ncal, thetas, P, dP = regime
    rels = []
    notes = []
    for i, theta in enumerate(thetas):
        Pmf, _ = mf_distribution(Ncal, theta, kmax=P.shape[1] - 1)
        sel = Pmf > 1e-6
        rel = np.max(np.abs(P[i][sel] / Pmf[sel] - 1.0))
        rels.append(rel)
        notes.append(f"theta={theta}: {rel:.1%} over k<={sel.sum() - 1}")
    report("1b (P(k|theta) vs closed form, all k with P>1e-6)", max(rels) <= 0.02,
           "; ".join(notes) + " (tol 2%; exact tail is sub-geometric, see ledger)")


def test_criterion_1c_fisher(regime):
    probe, pulse1, Ncal, thetas, P, dP = regime
    rels = []
    for i, theta in enumerate(thetas):
        F = fisher_from_arrays(P[i], dP[i])
        rel = abs(F / mf_fisher(Ncal, theta) - 1.0)
        rels.append((theta, rel))
    ok = all(r <= 0.02 for _, r in rels)
    report("1c (F(theta) vs closed form)", ok,
           "; ".join(f"theta={t}: {r:.2%}" for t, r in rels) + " (tol 2%)")


def test_criterion_2_saturation(regime):
    probe, pulse1, *_ = regime
    rels = []
    for theta in (0.05, 0.2):
        dist = run_sequence(probe, SequenceSpec(pulse1, pulse1.inverse(), theta))
        ep = error_propagation(dist)
        crb = 1.0 / np.sqrt(fisher_information(dist))
        rels.append((theta, abs(ep / crb - 1.0)))
    ok = all(r <= 0.02 for _, r in rels)
    report("2 (error propagation saturates Cramer-Rao)", ok,
           "; ".join(f"theta={t}: ep/crb-1 = {r:.2%}" for t, r in rels) + " (tol 2%)")


def test_criterion_3a_zero_theta_limit():
    rels = []
    for nbar, eta in ((100.0, 0.2), (200.0, 0.1)):
        pulse1 = solve_pulse_for_eta(nbar, eta)
        probe = poisson_sectors(nbar)
        f0 = fisher_at_zero(probe, pulse1)
        dist = run_sequence(probe, SequenceSpec(pulse1, pulse1.inverse(), 1e-3))
        rels.append(((nbar, eta), abs(fisher_information(dist) / f0 - 1.0)))
    ok = all(r <= 0.005 for _, r in rels)
    report("3a (theta->0 limit vs F(1e-3))", ok,
           "; ".join(f"{p}: {r:.3%}" for p, r in rels) + " (tol 0.5%)")


def test_criterion_3b_zero_theta_population_product(regime):
    probe, pulse1, Ncal, *_ = regime
    f0 = fisher_at_zero(probe, pulse1)
    ref = Ncal * (Ncal + 2.0)
    rel = abs(f0 / ref - 1.0)
    report("3b (F(0) vs Ncal(Ncal+2) in the regime)", rel <= 0.02,
           f"F(0)={f0:.2f} vs {ref:.2f}, rel {rel:.2%} (tol 2%; ~1.3*eta depletion, see ledger)")


def test_criterion_4_scaling_law():
    eta = 0.2
    alphas = {}
    for nbar in (200.0, 400.0, 600.0):
        pulse1 = solve_pulse_for_eta(nbar, eta)
        probe = poisson_sectors(nbar)
        F, _ = fisher_opt(probe, pulse1, second_pulse(pulse1, "inverse"))
        alphas[nbar] = F / nbar**2
    spread = max(alphas.values()) / min(alphas.values()) - 1.0
    devs = {n: abs(a / 0.0296 - 1.0) for n, a in alphas.items()}
    ok = spread <= 0.10 and all(d <= 0.15 for d in devs.values())
    report("4 (F_opt = alpha nbar^2 scaling, eta=0.2)", ok,
           f"alpha={{{', '.join(f'{int(n)}: {a:.5f}' for n, a in alphas.items())}}}, "
           f"spread {spread:.1%} (tol 10%), vs 0.0296 max dev {max(devs.values()):.1%} (tol 15%)")


def _fopt_noiseless(nbar, eta):
    pulse1 = solve_pulse_for_eta(nbar, eta)
    probe = poisson_sectors(nbar)
    F, _ = fisher_opt(probe, pulse1, second_pulse(pulse1, "inverse"))
    return F


def test_criterion_5_ssn_onset():
    ncr_005 = ssn_critical_n(0.05)
    ref = mf_critical_n(0.05)
    dev = abs(ncr_005 / ref - 1.0)
    ncr_02 = ssn_critical_n(0.2)
    above = _fopt_noiseless(float(ncr_02), 0.2)
    below = _fopt_noiseless(float(ncr_02 - 1), 0.2)
    ok = dev <= 0.20 and above > ncr_02 and below <= ncr_02 - 1
    report("5 (SSN onset)", ok,
           f"eta=0.05: nbar_cr={ncr_005} vs {ref:.0f} ({dev:.1%}, tol 20%); "
           f"eta=0.2: nbar_cr={ncr_02}, F({ncr_02})={above:.2f}>{ncr_02}, "
           f"F({ncr_02 - 1})={below:.2f}<={ncr_02 - 1}")


def test_criterion_6_ratio_scan():
    nbar = 200.0
    probe = poisson_sectors(nbar)
    ratios = np.round(np.arange(-1.5, 1.51, 0.1), 10)
    summary = []
    ok = True
    any_positive_ssn = False
    for eta in (0.1, 0.2):
        pulse1 = solve_pulse_for_eta(nbar, eta)
        fopts = {}
        for ratio in ratios:
            if ratio == 0.0:
                fopts[ratio] = 0.0
                continue
            phi2 = 0.5 * np.pi if ratio > 0 else 0.0
            pulse2 = PulseSpec(float(ratio) * pulse1.area, phi2)
            fopts[ratio], _ = fisher_opt(probe, pulse1, pulse2)
        best = max(fopts, key=fopts.get)
        pos_best = max(f for r, f in fopts.items() if r > 0)
        ok = ok and best == -1.0
        # positive-ratio SSN is required for at least one sampled eta; at
        # eta=0.1 the same-sign critical atom number exceeds 200 (see ledger)
        any_positive_ssn = any_positive_ssn or pos_best > nbar
        summary.append(
            f"eta={eta}: argmax={best} (F={fopts[best]:.0f}), best positive F={pos_best:.0f}"
        )
    ok = ok and any_positive_ssn
    report("6 (ratio scan: optimum at -1, positive-ratio SSN)", ok,
           "; ".join(summary) + f" (nbar={nbar:.0f})")


def test_criterion_7_loss_oracle():
    mean, se = decay_mean_n0(200.0, 0.001, n_traj=2000, seed=0)
    law = mean_n0_decay(200.0, 0.001)
    dev = abs(mean - law) / se
    report("7 (two-body loss decay-law oracle)", dev <= 3.0,
           f"<N0> = {mean:.3f} +- {se:.3f} vs {law:.3f} ({dev:.2f} MC standard errors, tol 3)")


def _fopt_lossy(nbar, eta, gamma, n_traj=2000, seed=1):
    pulse1 = solve_pulse_for_eta(nbar, eta)
    probe = poisson_sectors(nbar)
    grid = lossy_theta_grid()
    loss = LossConfig(gamma_over_chi=gamma, n_traj=n_traj, seed=seed)
    P, dP, _ = lossy_distribution_grid(probe, pulse1, second_pulse(pulse1, "inverse"), grid, loss)
    return max(fisher_from_arrays(P[i], dP[i]) for i in range(len(grid)))


def test_criterion_8_loss_extinction():
    results = []
    ok = True
    for eta in (0.1, 0.2, 0.3):
        for nbar in (50.0, 100.0, 200.0, 400.0):
            F = _fopt_lossy(nbar, eta, 0.05)
            results.append(f"({eta},{int(nbar)}):{F:.0f}")
            ok = ok and F <= nbar
    F_ssn = _fopt_lossy(200.0, 0.2, 0.01)
    ok = ok and F_ssn > 200.0
    report("8 (loss extinction at gamma/chi=0.05; SSN survives at 0.01)", ok,
           "F_opt[gamma/chi=0.05] = " + " ".join(results)
           + f"; gamma/chi=0.01 at (0.2,200): F_opt={F_ssn:.0f} (>200 required)")


def test_criterion_9_detection_noise():
    ncr = ssn_critical_n_meanfield_detection(0.1, 2.0)
    ref = mf_critical_n_detection(0.1, 2.0)
    dev = abs(ncr / ref - 1.0)
    # tiny-sigma smearing reproduces the discrete Fisher information
    probe = poisson_sectors(50.0)
    pulse1 = solve_pulse_for_eta(50.0, 0.2)
    dist = run_sequence(probe, SequenceSpec(pulse1, pulse1.inverse(), 0.3))
    Fd = fisher_information(dist)
    Fs = fisher_detection(dist, DetectionConfig(sigma=1e-3))
    srel = abs(Fs / Fd - 1.0)
    ok = dev <= 0.25 and srel <= 1e-3
    report("9 (detection noise)", ok,
           f"semianalytic nbar_cr={ncr} vs 2sigma/eta^2={ref:.0f} ({dev:.1%}, tol 25%); "
           f"sigma=1e-3 smearing rel {srel:.2e} (tol 1e-3)")


def test_criterion_10_property_suite(rng):
    failures = []

    # unitarity / normalization to 1e-10
    for M in (7, 64, 301):
        st = evolve_smd(vacuum_probe(M), PulseSpec(0.07, 0.8))
        st = apply_phase(st, 0.9)
        if abs(st.norm() - 1.0) > 1e-10:
            failures.append(f"unitarity M={M}")

    # derivative channel vs finite differences, 20 random cases, 1e-6 absolute
    for _ in range(20):
        nbar = float(rng.uniform(5, 100))
        eta = float(rng.uniform(0.02, 0.3))
        theta = float(rng.uniform(0.0, np.pi))
        pulse1 = solve_pulse_for_eta(nbar, eta)
        probe = poisson_sectors(nbar)
        h = 1e-5
        P, dP = sequence_distribution_grid(
            probe, pulse1, pulse1.inverse(), [theta - h, theta, theta + h]
        )
        if np.max(np.abs((P[2] - P[0]) / (2 * h) - dP[1])) > 1e-6:
            failures.append(f"derivative nbar={nbar:.0f}")

    # gauge reduction vs dense complex diagonalization, M <= 40, 1e-12
    for M in (9, 24, 40):
        phi1, phi2, theta = rng.uniform(0, 2 * np.pi, 3)
        p1, p2 = PulseSpec(0.09, phi1), PulseSpec(-0.05, phi2)
        a = evolve_smd(apply_phase(evolve_smd(vacuum_probe(M), p1), theta), p2)
        b = evolve_smd_dense(apply_phase(evolve_smd_dense(vacuum_probe(M), p1), theta), p2)
        if np.max(np.abs(a.probabilities() - b.probabilities())) > 1e-12:
            failures.append(f"gauge M={M}")

    # Poisson truncation mass bound
    for nbar in (0.7, 30.0, 800.0):
        pm = poisson_sectors(nbar, 1e-10)
        if 1.0 - pm.retained_mass > 1e-10 or abs(pm.weights.sum() - 1.0) > 1e-14:
            failures.append(f"poisson nbar={nbar}")

    # bit-identical reruns under fixed seeds
    probe = poisson_sectors(40.0)
    p1 = PulseSpec(0.06)
    seq = SequenceSpec(p1, p1.inverse(), 0.4)
    loss = LossConfig(gamma_over_chi=0.02, n_traj=120, seed=11)
    d1 = lossy_output_distribution(probe, seq, loss, threads=1)
    d2 = lossy_output_distribution(probe, seq, loss, threads=2)
    if not (np.array_equal(d1.p, d2.p) and np.array_equal(d1.dp_dtheta, d2.dp_dtheta)):
        failures.append("bit-identical reruns")

    report("10 (property suite)", not failures,
           "all properties hold" if not failures else "failed: " + ", ".join(failures))


def test_zz_summary():
    print("\n" + "=" * 72)
    for line in _LINES:
        print(line)
    print("=" * 72)
