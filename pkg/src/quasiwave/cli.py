"""Batch experiment harness: one subcommand per pipeline stage.

Subcommands: profile | predict | simulate | scaling | residual | geometry.
Outputs are deterministic JSON/CSV files carrying the config hash and the
package version; wall-clock timings go to the console only.  Exit codes:
0 success, 1 numerical failure, 2 config or diagnostic error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import fields, radon, asymptotic, wavesim, approx, blowup_geometry
from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload, cfg):
    payload = dict(payload)
    payload["_meta"] = cfg.provenance()
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)


def _csv_header(cfg):
    return f"# quasiwave {__version__} config {cfg.sha256()}"


def _write_csv(path, header_cols, rows, cfg):
    lines = [_csv_header(cfg), header_cols]
    lines.extend(rows)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_data(cfg):
    if cfg.get("data.file"):
        support = cfg.get("data.support_radius")
        if support is None:
            raise ConfigError("data.file requires data.support_radius")
        data = fields.load_grid_data(cfg.get("data.file"), support,
                                     c1=cfg.get("data.c1") or 1.0,
                                     c2=cfg.get("data.c2") or 1.0)
    else:
        data = fields.data_preset(cfg.get("data.preset"))
        c1, c2 = cfg.get("data.c1"), cfg.get("data.c2")
        if c1 is not None or c2 is not None:
            data = fields.InitialData(
                data.u0, data.u1, data.support_radius,
                c1=c1 if c1 is not None else data.c1,
                c2=c2 if c2 is not None else data.c2,
                c1_fn=data.c1_fn, c2_fn=data.c2_fn, label=data.label)
    return data


def _compute_profile(cfg, data):
    M = data.support_radius
    step = cfg.get("profile.sigma_step")
    n = int(round((M - cfg.get("profile.sigma_min")) / step))
    sigma_grid = cfg.get("profile.sigma_min") + step * np.arange(n + 1)
    theta_grid = np.linspace(0.0, 2.0 * np.pi, cfg.get("profile.n_theta") + 1)
    prof = radon.friedlander_profile(
        data, sigma_grid=sigma_grid, theta_grid=theta_grid,
        slice_step=cfg.get("profile.slice_step"),
        line_step=cfg.get("profile.line_step"),
        panel_width=cfg.get("profile.panel_width"))
    if cfg.get("profile.derivative") == "finite-difference":
        prof = radon.profile_derivative(prof, mode="finite-difference")
    return prof


def _resolve_profile(cfg):
    """Profile from (in order): profile.file, profile.preset, data pipeline."""
    if cfg.get("profile.file"):
        prof = radon.DirectionalProfile.from_json(cfg.get("profile.file"))
        if prof.dF0_dsigma is None:
            prof = radon.profile_derivative(prof)
        return prof, None
    if cfg.get("profile.preset"):
        return radon.profile_preset(cfg.get("profile.preset")), None
    data = _load_data(cfg)
    return _compute_profile(cfg, data), data


def cmd_profile(args, cfg):
    data = _load_data(cfg)
    prof = _compute_profile(cfg, data)
    out = _outdir(args)
    prof.metadata["provenance"] = cfg.provenance()
    prof.save_json(out / "profile.json")

    i0 = int(np.argmin(np.abs(prof.sigma_grid)))
    rows = [f"{th!r},{v!r}" for th, v in zip(prof.theta_grid, prof.F0[i0, :])]
    _write_csv(out / "f0_at_zero.csv", "theta,F0", rows, cfg)

    if np.max(np.abs(prof.F0)) == 0.0:
        report = {"status": "empty profile (zero data)", "decay": None}
    else:
        decay = radon.decay_check(prof,
                                  orders=tuple(int(k) for k in
                                               cfg.get("decay.orders")))
        report = {"status": "ok",
                  "decay": {str(k): v for k, v in decay.items()}}
    _write_json(out / "decay_report.json", report, cfg)
    _say(args, f"profile written to {out}; status: {report['status']}")
    return EXIT_OK


def cmd_predict(args, cfg):
    prof, data = _resolve_profile(cfg)
    c1 = cfg.get("data.c1")
    c2 = cfg.get("data.c2")
    if data is not None:
        c1 = data.c1 if c1 is None else c1
        c2 = data.c2 if c2 is None else c2
    pred = asymptotic.predict_lifespan(
        prof, refine=cfg.get("predict.refine"),
        c1=1.0 if c1 is None else c1, c2=1.0 if c2 is None else c2,
        hessian_floor=cfg.get("predict.hessian_floor"))
    out = _outdir(args)
    _write_json(out / "prediction.json", pred.to_json_dict(), cfg)
    if pred.no_blowup:
        _say(args, "no blowup predicted (tau0 = +inf)")
    else:
        _say(args, f"tau0 = {pred.tau0:.6f} at (sigma0, theta0) = "
             f"({pred.sigma0:.6f}, {pred.theta0:.6f}); "
             f"degenerate = {pred.degenerate}")
    return EXIT_OK


def _geometry_from_config(cfg, data, horizon):
    kind = cfg.get("sim.geometry")
    h = cfg.get("sim.h")
    if kind == "radial":
        if cfg.get("sim.r_max") is not None:
            return wavesim.RadialGeometry(r_max=cfg.get("sim.r_max"),
                                          h_r=h or 0.01,
                                          window_depth=cfg.get("sim.window_depth"),
                                          taper_width=cfg.get("sim.taper_width"))
        return wavesim.default_geometry_policy(
            "radial", data, cfg.get("sim.epsilon"), horizon, h_r=h,
            window_depth=cfg.get("sim.window_depth"))
    if kind == "cartesian":
        if cfg.get("sim.extent") is not None:
            return wavesim.CartesianGeometry(extent=cfg.get("sim.extent"),
                                             h=h or 0.04)
        return wavesim.default_geometry_policy("cartesian", data,
                                               cfg.get("sim.epsilon"), horizon,
                                               h_r=h)
    if kind == "annulus":
        return wavesim.default_geometry_policy(
            "annulus", data, cfg.get("sim.epsilon"), horizon, h_r=h,
            n_theta=cfg.get("sim.n_theta"),
            window_depth=cfg.get("sim.window_depth"))
    raise ConfigError(f"unknown sim.geometry {kind!r}")


def _detect_config(cfg, horizon):
    return wavesim.DetectionConfig(
        horizon=horizon,
        growth_factor=cfg.get("detect.growth_factor"),
        hard_threshold=cfg.get("detect.hard_threshold"),
        max_refinements=cfg.get("detect.max_refinements"),
        refine_h=cfg.get("detect.refine_h"),
        monitor_dt=cfg.get("detect.monitor_dt"),
        cfl=cfg.get("sim.cfl"))


def cmd_simulate(args, cfg):
    data = _load_data(cfg)
    eps = cfg.get("sim.epsilon")
    horizon = cfg.get("sim.horizon")
    if horizon is None:
        prof = _compute_profile(cfg, data)
        pred = asymptotic.predict_lifespan(prof, c1=data.c1, c2=data.c2)
        if pred.no_blowup:
            horizon = 20.0 / eps
        else:
            horizon = cfg.get("sim.horizon_factor") * (pred.tau0 / eps) ** 2
    geometry = _geometry_from_config(cfg, data, horizon)
    field = wavesim.make_initial_field(data, eps, geometry,
                                       cfl=cfg.get("sim.cfl"), horizon=horizon)
    report = wavesim.run_until_blowup(field, _detect_config(cfg, horizon))
    out = _outdir(args)
    _write_json(out / "report.json", report.to_json_dict(), cfg)
    report.save_history_csv(out / "history.csv")
    snap_times = cfg.get("sim.snapshot_times")
    if snap_times:
        rows, header = field.snapshot_rows()
        body = [",".join(repr(v) for v in row) for row in rows]
        _write_csv(out / "snapshot_final.csv", header, body, cfg)
    _say(args, f"detected={report.detected} reason={report.reason!r} "
         f"T_est={report.T_est}")
    return EXIT_OK


def cmd_scaling(args, cfg):
    data = _load_data(cfg)
    prof = _compute_profile(cfg, data)
    pred = asymptotic.predict_lifespan(prof, c1=data.c1, c2=data.c2)
    study = wavesim.scaling_study(
        data, cfg.get("scaling.epsilons"), pred.tau0,
        geometry_kind=cfg.get("scaling.geometry"),
        horizon_factor=cfg.get("scaling.horizon_factor"),
        h_r=cfg.get("sim.h"), n_theta=cfg.get("sim.n_theta"),
        window_depth=cfg.get("sim.window_depth"), cfl=cfg.get("sim.cfl"),
        verbose=not args.quiet)
    out = _outdir(args)
    payload = study.to_json_dict()
    gaps = [r.rel_gap for r in study.rows if r.rel_gap is not None]
    payload["trend_verdict"] = (
        "approaching" if study.gap_decreasing else
        "not approaching" if study.gap_decreasing is not None else
        "undetermined")
    _write_json(out / "study.json", payload, cfg)
    rows = []
    for r in study.rows:
        vals = [r.epsilon, int(r.detected), r.T_est, r.eps_sqrt_T, r.rel_gap,
                r.rate_exponent, r.sup_u_max, r.geometry, r.h, r.dt0,
                r.refinements, int(r.flagged)]
        rows.append(",".join("" if v is None else repr(v) if
                             isinstance(v, float) else str(v) for v in vals))
    _write_csv(out / "study.csv",
               "epsilon,detected,T_est,eps_sqrt_T,rel_gap,rate_exponent,"
               "sup_u_max,geometry,h,dt0,refinements,flagged", rows, cfg)
    for r in study.rows:
        _say(args, f"  eps={r.epsilon}: gap={r.rel_gap} "
             f"(wall {r.wall_time:.1f}s, console only)")
    _say(args, f"trend: {payload['trend_verdict']}")
    if any(r.flagged for r in study.rows):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_residual(args, cfg):
    data = _load_data(cfg)
    prof = _compute_profile(cfg, data)
    pred = asymptotic.predict_lifespan(prof, c1=data.c1, c2=data.c2)
    b = None if pred.no_blowup else cfg.get("residual.b_factor") * pred.tau0
    report = approx.residual_norm_scaling(
        data, prof, cfg.get("residual.epsilons"), b=b, prediction=pred,
        h_r=cfg.get("residual.h"), snap_dt=cfg.get("residual.snap_dt"),
        verbose=not args.quiet)
    out = _outdir(args)
    rows = []
    for r in report.rows:
        reg = r.regime_breakdown
        rows.append(",".join(repr(float(x)) for x in [
            r.epsilon, r.integral, reg.get("A", 0.0), reg.get("B", 0.0),
            reg.get("C", 0.0)]) + f",{r.n_samples},{int(r.flagged)}")
    _write_csv(out / "residual.csv", "epsilon,I,I_A,I_B,I_C,n_samples,flagged",
               rows, cfg)
    _write_json(out / "slope_report.json",
                {"slope": report.slope, "r2": report.r2,
                 "ratios": report.ratios, "b": report.b,
                 "status": report.status}, cfg)
    _say(args, f"slope = {report.slope} (status: {report.status})")
    return EXIT_OK


def cmd_geometry(args, cfg):
    prof, data = _resolve_profile(cfg)
    c1 = cfg.get("data.c1") if cfg.get("data.c1") is not None else \
        (data.c1 if data is not None else 1.0)
    c2 = cfg.get("data.c2") if cfg.get("data.c2") is not None else \
        (data.c2 if data is not None else 1.0)
    pred = asymptotic.predict_lifespan(prof, c1=c1, c2=c2)
    out = _outdir(args)
    if pred.no_blowup:
        _write_json(out / "h_report.json",
                    {"status": "no blowup predicted"}, cfg)
        _say(args, "no blowup predicted; chart not built")
        return EXIT_CONFIG
    tau1 = cfg.get("geometry.tau1_factor") * pred.tau0
    eta = cfg.get("geometry.eta_factor") * (pred.tau0 - tau1)
    chart = blowup_geometry.build_chart(prof, pred, tau1=tau1, eta=eta)
    chart.export_csv(out / "chart_dphi.csv")
    try:
        report = blowup_geometry.check_condition_H(
            chart, refine=cfg.get("geometry.refine"))
    except blowup_geometry.ChartError as exc:
        _write_json(out / "h_report.json",
                    {"status": f"H not checkable: {exc}"}, cfg)
        _say(args, f"H not checkable: {exc}")
        return EXIT_CONFIG
    report["status"] = "ok"
    _write_json(out / "h_report.json", report, cfg)
    _say(args, f"condition (H) all_pass = {report['all_pass']}")
    return EXIT_OK


COMMANDS = {
    "profile": cmd_profile,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "scaling": cmd_scaling,
    "residual": cmd_residual,
    "geometry": cmd_geometry,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quasiwave",
        description="Lifespan and blowup laboratory for 2-D quasilinear waves")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key-value config file")
        p.add_argument("--out", default=f"out_{name}", help="output directory")
        p.add_argument("--preset", default=None,
                       help="data preset override (data.preset)")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.preset:
            cfg.set("data.preset", args.preset)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, fields.SupportError, wavesim.GeometryError,
            radon.QuadratureError, blowup_geometry.ChartError,
            FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (asymptotic.DirectIntegrationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
