"""Command-line front end producing machine-readable sweep tables.

Commands mirror the figures of interest: fisher-curve (sensitivity vs
phase), scaling-fit (F_opt vs nbar power law), ratio-scan (second-pulse
area ratio), ssn-map (critical atom number vs eta, optionally with loss or
detection noise), loss-curves (transfer fraction vs time under loss).

Tables carry a metadata header sufficient to reproduce them bit-identically
(version, seed, configs, pulse convention). CSV uses '#'-prefixed metadata
lines; JSON mirrors the same keys. All floats are encoded with 17
significant digits so the two formats round-trip identically.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from ._parallel import resolve_threads
from .dynamics import PulseSpec
from .estimation import (
    NoSSNError,
    ZeroSlopeError,
    default_theta_grid,
    error_propagation,
    fisher_from_arrays,
    fisher_opt,
    fopt_at,
    lossy_theta_grid,
    ssn_critical_n,
)
from .hilbert import poisson_sectors
from .interferometer import (
    OutputDistribution,
    UnreachableEtaError,
    second_pulse,
    sequence_distribution_grid,
    solve_pulse_for_eta,
)
from .meanfield import mf_critical_n, mf_critical_n_detection, mf_pair_number
from .noise import DetectionConfig, IntegratorError, LossConfig, lossy_transfer_curve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNREACHABLE_ETA = 3
EXIT_INTEGRATOR = 4


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_table(out, fmt, metadata, columns, rows):
    if fmt == "json":
        payload = {
            "metadata": {k: (_fmt(v) if isinstance(v, float) else v) for k, v in metadata.items()},
            "columns": list(columns),
            "rows": [[_fmt(v) if isinstance(v, float) else v for v in row] for row in rows],
        }
        text = json.dumps(payload, indent=1)
    else:
        lines = [f"# {k} = {_fmt(v)}" for k, v in metadata.items()]
        lines.append(",".join(columns))
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        text = "\n".join(lines)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _floats(spec: str) -> list[float]:
    return [float(tok) for tok in str(spec).split(",") if tok != ""]


def _nbar_list(spec: str) -> list[float]:
    """Comma list, or 'start:stop:step' inclusive range."""
    if ":" in str(spec):
        start, stop, step = (float(t) for t in str(spec).split(":"))
        return list(np.arange(start, stop + 0.5 * step, step))
    return _floats(spec)


def _theta_grid(points: int | None) -> np.ndarray:
    if points is None:
        return default_theta_grid()
    n_log = max(3, round(points * 2 / 7))
    n_lin = max(2, points - n_log)
    return np.concatenate(
        [np.geomspace(1e-3, 0.1, n_log), np.linspace(0.1, np.pi, n_lin + 1)[1:]]
    )


def _base_meta(args, **extra):
    meta = {
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "pulse_convention": args.pulse_convention,
        "threads": resolve_threads(args.threads),
    }
    meta.update(extra)
    return meta


def cmd_fisher_curve(args):
    nbar = float(args.nbar)
    eta = _floats(args.eta)[0]
    pulse1 = solve_pulse_for_eta(nbar, eta)
    pulse2 = second_pulse(pulse1, args.pulse_convention)
    probe = poisson_sectors(nbar)
    grid = _theta_grid(args.theta_points)
    P, dP = sequence_distribution_grid(probe, pulse1, pulse2, grid, threads=args.threads)
    rows = []
    for i, th in enumerate(grid):
        F = fisher_from_arrays(P[i], dP[i])
        dist = OutputDistribution(p=P[i], dp_dtheta=dP[i], theta=float(th))
        try:
            inv_ep_sq = 1.0 / error_propagation(dist) ** 2
        except ZeroSlopeError:
            inv_ep_sq = 0.0
        rows.append([float(th), F, inv_ep_sq, nbar])
    meta = _base_meta(
        args, nbar=nbar, eta=eta, pulse_area=pulse1.area,
        theta_opt=float(grid[int(np.argmax([r[1] for r in rows]))]),
        units="theta: rad; areas: chi*t; shot_noise: F = nbar",
    )
    write_table(args.out, args.format, meta, ["theta", "fisher", "inv_ep_sq", "shot_noise"], rows)


def cmd_scaling_fit(args):
    etas = _floats(args.eta)
    nbars = _nbar_list(args.nbar)
    if len(nbars) < 2:
        raise SystemExit(EXIT_USAGE)
    rows = []
    alphas = []
    for eta in etas:
        fopts = []
        for nb in nbars:
            pulse1 = solve_pulse_for_eta(nb, eta)
            probe = poisson_sectors(nb)
            F, _ = fisher_opt(probe, pulse1, second_pulse(pulse1, args.pulse_convention),
                              _theta_grid(args.theta_points), threads=args.threads)
            fopts.append(F)
        fopts = np.array(fopts)
        nb_arr = np.array(nbars)
        tail = nb_arr >= nb_arr.max() / 2
        if tail.sum() < 2:
            raise SystemExit(EXIT_USAGE)
        alpha = float(np.sum(fopts[tail] * nb_arr[tail] ** 2) / np.sum(nb_arr[tail] ** 4))
        resid = float(np.sqrt(np.mean((fopts[tail] / (alpha * nb_arr[tail] ** 2) - 1.0) ** 2)))
        slope = float(np.polyfit(np.log(nb_arr), np.log(fopts), 1)[0])
        alphas.append(alpha)
        rows.append([eta, alpha, resid, slope])
    eta_arr = np.array(etas)
    alpha_arr = np.array(alphas)
    # constrained fit alpha = eta^2 - c*eta^3 and free fit alpha = a*eta^2 + b*eta^3
    c = float(np.sum((eta_arr**2 - alpha_arr) * eta_arr**3) / np.sum(eta_arr**6))
    A = np.vstack([eta_arr**2, eta_arr**3]).T
    coef, *_ = np.linalg.lstsq(A, alpha_arr, rcond=None)
    meta = _base_meta(
        args, nbar_list=",".join(_fmt(float(n)) for n in nbars),
        cubic_coefficient_c=c, free_fit_a=float(coef[0]), free_fit_b=float(coef[1]),
        units="alpha: F_opt/nbar^2 tail fit; slope: dlogF/dlognbar",
    )
    write_table(args.out, args.format, meta, ["eta", "alpha", "fit_residual", "loglog_slope"], rows)


def cmd_ratio_scan(args):
    nbar = float(args.nbar)
    etas = _floats(args.eta)
    ratios = _floats(args.ratio) if args.ratio else [round(-1.5 + 0.1 * i, 10) for i in range(31)]
    probe = poisson_sectors(nbar)
    grid = _theta_grid(args.theta_points)
    rows = []
    for eta in etas:
        pulse1 = solve_pulse_for_eta(nbar, eta)
        for ratio in ratios:
            if ratio == 0.0:
                rows.append([eta, ratio, 0.0, 0.0, 0.0])
                continue
            phi2 = 0.5 * np.pi if ratio > 0 else 0.0
            pulse2 = PulseSpec(ratio * pulse1.area, phi2)
            F, th_opt = fisher_opt(probe, pulse1, pulse2, grid, threads=args.threads)
            rows.append([eta, ratio, F, th_opt, phi2])
    meta = _base_meta(
        args, nbar=nbar,
        positive_ratio_phi2="pi/2 (same-sign second pulse realized via central-mode phase shift)",
        units="ratio: area2/area1; theta_opt: rad",
    )
    write_table(args.out, args.format, meta, ["eta", "ratio", "f_opt", "theta_opt", "phi2"], rows)


def cmd_ssn_map(args):
    etas = _floats(args.eta)
    gammas = _floats(args.gamma_over_chi) if args.gamma_over_chi else []
    sigmas = _floats(args.sigma) if args.sigma else []
    if gammas and sigmas:
        raise SystemExit(EXIT_USAGE)
    rows = []
    if gammas:
        configs = [("gamma_over_chi", g) for g in gammas]
    elif sigmas:
        configs = [("sigma", s) for s in sigmas]
    else:
        configs = [("noiseless", 0.0)]
    for kind, val in configs:
        for eta in etas:
            loss = det = None
            if kind == "gamma_over_chi":
                loss = LossConfig(gamma_over_chi=val, n_traj=args.trajectories, seed=args.seed)
                reference = mf_critical_n(eta) if eta < 0.5 else float("nan")
            elif kind == "sigma":
                det = DetectionConfig(sigma=val)
                reference = mf_critical_n_detection(eta, val)
            else:
                reference = mf_critical_n(eta) if eta < 0.5 else float("nan")
            grid = lossy_theta_grid() if loss is not None else _theta_grid(args.theta_points)
            try:
                ncr = ssn_critical_n(
                    eta, convention=args.pulse_convention, detection=det, loss=loss,
                    nbar_max=args.nbar_max, threads=args.threads, theta_grid=grid,
                )
                F, theta_opt = fopt_at(
                    eta, float(ncr), convention=args.pulse_convention,
                    detection=det, loss=loss, theta_grid=grid, threads=args.threads,
                )
                rows.append([kind, val, eta, ncr, theta_opt, F, reference, "ok"])
            except NoSSNError:
                rows.append([kind, val, eta, -1, 0.0, 0.0, reference, "no-ssn"])
    meta = _base_meta(
        args, nbar_max=args.nbar_max, trajectories=args.trajectories,
        units="nbar_cr: atoms; mf_reference: (1-2eta)/eta^2 or 2 sigma/eta^2",
    )
    write_table(
        args.out, args.format, meta,
        ["noise_kind", "noise_value", "eta", "nbar_cr", "theta_opt", "f_opt",
         "mf_reference", "status"],
        rows,
    )


def cmd_loss_curves(args):
    nbar = float(args.nbar)
    gammas = _floats(args.gamma_over_chi) if args.gamma_over_chi else [0.0]
    if args.area_grid:
        areas = _floats(args.area_grid)
    else:
        areas = list(np.linspace(0.0025, 0.05, 20) / np.sqrt(nbar) * np.sqrt(200.0))
    rows = []
    for g in gammas:
        loss = LossConfig(gamma_over_chi=g, n_traj=args.trajectories, seed=args.seed)
        etas = lossy_transfer_curve(nbar, loss, areas, threads=args.threads)
        for a, e in zip(areas, etas):
            rows.append([g, float(a), float(e), mf_pair_number(nbar, float(a)) / nbar])
    meta = _base_meta(
        args, nbar=nbar, trajectories=args.trajectories,
        units="area: chi*t; eta: transferred fraction; mf_eta: parametric reference",
    )
    write_table(args.out, args.format, meta, ["gamma_over_chi", "area", "eta", "mf_eta"], rows)


def _load_config(argv):
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if not path:
        return {}
    cfg = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            cfg[key.strip().replace("-", "_")] = val.strip()
    return cfg


def build_parser(cfg):
    def dflt(key, fallback=None, cast=str):
        return cast(cfg[key]) if key in cfg else fallback

    parser = argparse.ArgumentParser(prog="spinmix", description=__doc__)
    parser.add_argument("--config", help="flat key = value config file; flags override")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=argparse.SUPPRESS)
        p.add_argument("--nbar", default=dflt("nbar"), help="mean atom number (or list/range where applicable)")
        p.add_argument("--eta", default=dflt("eta"), help="transfer fraction(s), comma separated")
        p.add_argument("--ratio", default=dflt("ratio"), help="second/first pulse area ratios, comma separated")
        p.add_argument("--gamma-over-chi", default=dflt("gamma_over_chi"), help="two-body loss ratios, comma separated")
        p.add_argument("--sigma", default=dflt("sigma"), help="detection noise sigmas, comma separated")
        p.add_argument("--trajectories", type=int, default=dflt("trajectories", 2000, int))
        p.add_argument("--seed", type=int, default=dflt("seed", 0, int))
        p.add_argument("--theta-points", type=int, default=dflt("theta_points", None, int))
        p.add_argument("--pulse-convention", choices=["inverse", "pi2"],
                       default=dflt("pulse_convention", "inverse"))
        p.add_argument("--out", default=dflt("out"))
        p.add_argument("--format", choices=["csv", "json"], default=dflt("format", "csv"))
        p.add_argument("--threads", type=int, default=dflt("threads", None, int))

    p = sub.add_parser("fisher-curve", help="F(theta) and 1/ep^2 vs theta")
    common(p)
    p.set_defaults(func=cmd_fisher_curve)

    p = sub.add_parser("scaling-fit", help="F_opt ~ alpha(eta) nbar^2 tail fits")
    common(p)
    p.set_defaults(func=cmd_scaling_fit)

    p = sub.add_parser("ratio-scan", help="F_opt vs second/first pulse area ratio")
    common(p)
    p.set_defaults(func=cmd_ratio_scan)

    p = sub.add_parser("ssn-map", help="critical atom number vs eta (optional noise)")
    common(p)
    p.add_argument("--nbar-max", type=int, default=dflt("nbar_max", 20000, int))
    p.set_defaults(func=cmd_ssn_map)

    p = sub.add_parser("loss-curves", help="transfer fraction vs pulse area under loss")
    common(p)
    p.add_argument("--area-grid", default=dflt("area_grid"), help="pulse areas, comma separated")
    p.set_defaults(func=cmd_loss_curves)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    cfg = _load_config(argv)
    parser = build_parser(cfg)
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UnreachableEtaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE_ETA
    except IntegratorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
