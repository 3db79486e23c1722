"""Acceptance suite: one test per criterion, each printing PASS/FAIL.

Criteria (tolerances pinned here):
  1. Radon oracle: truncated-Gaussian transform vs sqrt(pi) e^{-s^2},
     max abs error < 1e-6, runtime < 10 s.
  2. Profile value: F0(0, theta) = sqrt(pi) Gamma(1/4) / (2^{5/2} pi)
     within 1e-4 for every theta; full grid < 60 s.
  3. Decay exponents: k = 0, 1 sigma-exponents within 0.15 of -1/2, -3/2,
     R^2 >= 0.9.
  4. Characteristic-vs-direct gap <= 1e-3 at tau = 0.8 tau0, refinement
     ratio in [3, 5]; < 60 s.
  5. Lifespan scaling: radial eps {0.4, 0.2, 0.1, 0.05}: |eps sqrt(T) -
     tau0|/tau0 <= 0.20 at eps = 0.05, decreasing from eps = 0.1; 2-D
     anisotropic eps {0.4, 0.2}: gap <= 0.35 and decreasing.
  6. Blowup rate: fitted |d_t u| exponent in [-1.3, -0.7] on every detected
     run; synthetic fitter identity exact.
  7. Residual scaling: slope of log I vs log eps over {0.4, 0.2, 0.1} in
     [1.3, 1.7].
  8. Condition (H): all five sub-checks pass on the non-degenerate preset;
     fold-time identity within 1e-4 relative; degenerate preset flagged.
  9. Solver hygiene: linear energy drift < 1e-6; finite-propagation cells
     exactly zero; 2nd-order convergence ratio in [3, 5]; bit-identical
     scaling-study reruns.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import gamma

from quasiwave import (fields, radon, asymptotic, wavesim, approx,
                       blowup_geometry, fitting, cli)
from oracles import GAUSSIAN_TAU0, SYNTH_TAU0


def report(criterion, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def test_criterion_1_radon_oracle(gaussian_data):
    start = time.perf_counter()
    s = np.linspace(-7.0, 7.0, 561)
    worst = 0.0
    for th in (0.0, 0.9, 2.2):
        omega = np.array([np.cos(th), np.sin(th)])
        sl = radon.radon_transform(gaussian_data.u1, omega, s,
                                   gaussian_data.support_radius)
        exact = np.sqrt(np.pi) * np.exp(-s * s) * (np.abs(s) < 6.0)
        worst = max(worst, float(np.max(np.abs(sl.values - exact))))
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-6 and elapsed < 10.0,
           f"max abs error {worst:.3e} (< 1e-6), runtime {elapsed:.2f}s (< 10)")


def test_criterion_2_profile_value(gaussian_profile_reference):
    prof = gaussian_profile_reference
    elapsed = prof.metadata.get("build_seconds", None)
    closed = math.sqrt(math.pi) * gamma(0.25) / (2.0 * 2.0 ** 1.5 * math.pi)
    i0 = int(np.argmin(np.abs(prof.sigma_grid)))
    worst = float(np.max(np.abs(prof.F0[i0, :] - closed)))
    ok = worst < 1e-4 and prof.theta_grid.size >= 257
    detail = (f"|F0(0,theta) - {closed:.5f}| <= {worst:.2e} over "
              f"{prof.theta_grid.size} angles")
    if elapsed is not None:
        ok = ok and elapsed < 60.0
        detail += f"; build {elapsed:.1f}s (< 60)"
    report(2, ok, detail)


def test_criterion_3_decay_exponents(gaussian_profile_reference):
    out = radon.decay_check(gaussian_profile_reference, orders=(0, 1))
    e0, r0 = out[0]["exponent"], out[0]["r2"]
    e1, r1 = out[1]["exponent"], out[1]["r2"]
    ok = (abs(e0 + 0.5) < 0.15 and r0 >= 0.9
          and abs(e1 + 1.5) < 0.15 and r1 >= 0.9)
    report(3, ok, f"k=0: {e0:.3f} (target -0.5, R2={r0:.4f}); "
                  f"k=1: {e1:.3f} (target -1.5, R2={r1:.4f})")


def test_criterion_4_characteristics_vs_direct(synthetic_profile):
    start = time.perf_counter()
    tau = 0.8 * SYNTH_TAU0
    coarse = asymptotic.verify_against_direct_integration(
        synthetic_profile, tau, sigma_span=(-6.0, 6.0))
    fine = asymptotic.verify_against_direct_integration(
        synthetic_profile, tau, sigma_span=(-6.0, 6.0),
        n_sigma=2 * coarse["n_sigma"] - 1)
    elapsed = time.perf_counter() - start
    ratio = coarse["l_inf"] / fine["l_inf"]
    ok = coarse["l_inf"] <= 1e-3 and 3.0 <= ratio <= 5.0 and elapsed < 60.0
    report(4, ok, f"L-inf gap {coarse['l_inf']:.2e} (<= 1e-3), refinement "
                  f"ratio {ratio:.2f} (in [3,5]), runtime {elapsed:.1f}s")


def test_criterion_5_lifespan_scaling_radial(radial_study):
    rows = {r.epsilon: r for r in radial_study.rows}
    ok = all(r.detected for r in radial_study.rows)
    gap_01, gap_005 = rows[0.1].rel_gap, rows[0.05].rel_gap
    ok = ok and gap_005 <= 0.20 and gap_005 < gap_01 and gap_01 <= 0.20
    detail = ", ".join(f"eps={e}: gap={rows[e].rel_gap:.3f}"
                       for e in (0.4, 0.2, 0.1, 0.05))
    report("5 (radial)", ok, detail + f"; decreasing={radial_study.gap_decreasing}")


def test_criterion_5_lifespan_scaling_anisotropic(aniso_study):
    rows = {r.epsilon: r for r in aniso_study.rows}
    ok = all(r.detected for r in aniso_study.rows)
    ok = ok and rows[0.2].rel_gap <= 0.35 and rows[0.2].rel_gap < rows[0.4].rel_gap
    detail = ", ".join(f"eps={e}: gap={rows[e].rel_gap:.3f}" for e in (0.4, 0.2))
    report("5 (2-D anisotropic)", ok, detail)


def test_criterion_6_blowup_rate(radial_study, aniso_study):
    t = np.linspace(0.0, 0.99, 300)
    T_id, win = fitting.fit_blowup_time(t, 1.0 / (1.0 - t), decade=1e9)
    p_id, _ = fitting.fit_rate_exponent(t, 1.0 / (1.0 - t), T_id, win)
    rates = [r.rate_exponent for r in radial_study.rows + aniso_study.rows
             if r.detected]
    ok = (abs(T_id - 1.0) < 1e-12 and abs(p_id + 1.0) < 1e-12
          and all(-1.3 < p < -0.7 for p in rates))
    report(6, ok, f"fitter identity T={T_id}, p={p_id}; "
                  f"run exponents {[round(p, 3) for p in rates]}")


@pytest.fixture(scope="session")
def residual_report():
    data = fields.data_preset("zero_mean_pulse")
    prof = radon.friedlander_profile(
        data, sigma_grid=np.arange(-40.0, data.support_radius + 1e-9, 0.01),
        theta_grid=np.linspace(0, 2 * np.pi, 9), slice_step=0.01)
    pred = asymptotic.predict_lifespan(prof)
    return approx.residual_norm_scaling(data, prof, [0.4, 0.2, 0.1],
                                        prediction=pred, h_r=0.005,
                                        snap_dt=0.01)


def test_criterion_7_residual_scaling(residual_report):
    rep = residual_report
    ok = rep.slope is not None and 1.3 <= rep.slope <= 1.7
    ok = ok and all(2.1 <= q <= 3.6 for q in rep.ratios)
    report(7, ok, f"slope {rep.slope:.3f} (target 1.5, band [1.3, 1.7]); "
                  f"ratios {[round(q, 2) for q in rep.ratios]} (band [2.1, 3.6])")


def test_criterion_8_condition_H(modulated_profile, synthetic_profile):
    pred = asymptotic.predict_lifespan(modulated_profile)
    chart = blowup_geometry.build_chart(modulated_profile, pred)
    rep = blowup_geometry.check_condition_H(chart)
    fold_gap = rep["fold_time_identity"]["relative_gap"]
    pred_deg = asymptotic.predict_lifespan(synthetic_profile)
    chart_deg = blowup_geometry.build_chart(synthetic_profile, pred_deg)
    degenerate_flagged = False
    try:
        blowup_geometry.check_condition_H(chart_deg)
    except blowup_geometry.ChartError:
        degenerate_flagged = True
    ok = rep["all_pass"] and fold_gap < 1e-4 and degenerate_flagged
    report(8, ok, f"subchecks a-e all pass={rep['all_pass']}, fold-time "
                  f"identity gap {fold_gap:.2e} (< 1e-4), degenerate preset "
                  f"flagged={degenerate_flagged}")


def test_criterion_9_solver_hygiene(tmp_path):
    lin = fields.linear_variant(fields.data_preset("gaussian"))
    # energy drift
    fld = wavesim.make_initial_field(lin, 0.1,
                                     wavesim.RadialGeometry(r_max=20.0,
                                                            h_r=0.02),
                                     horizon=12.0)
    fld.step(1)
    e0 = fld.energy()
    fld.step(int(round(11.0 / fld.dt)))
    drift = abs(fld.energy() - e0) / e0
    # finite propagation (exact zeros beyond the stencil cone)
    fld2 = wavesim.make_initial_field(lin, 0.1,
                                      wavesim.RadialGeometry(r_max=30.0,
                                                             h_r=0.05),
                                      horizon=8.0)
    n = int(round(6.0 / fld2.dt))
    fld2.step(n)
    cone = lin.support_radius + (n + 2) * fld2.h
    zeros_ok = bool(np.all(fld2.u[fld2.r > cone] == 0.0))
    # 2nd-order convergence (radial, against fine reference)
    errs = []
    probe = np.linspace(0.5, 9.0, 60)
    from scipy.interpolate import CubicSpline
    for h in (0.08, 0.04, 0.01):
        f = wavesim.make_initial_field(
            lin, 0.2, wavesim.RadialGeometry(r_max=14.0, h_r=h), horizon=4.0,
            cfl=0.4)
        f.set_dt(4.0 / int(math.ceil(4.0 / f.dt)))
        f.step(int(round(4.0 / f.dt)))
        errs.append(CubicSpline(f.r, f.u)(probe))
    e_coarse = np.max(np.abs(errs[0] - errs[2]))
    e_fine = np.max(np.abs(errs[1] - errs[2]))
    ratio = e_coarse / e_fine
    # determinism via two identical CLI scaling invocations
    cfg = tmp_path / "det.cfg"
    cfg.write_text("data.preset = gaussian\n"
                   "scaling.epsilons = 0.4\n"
                   "scaling.geometry = radial\n"
                   "profile.sigma_step = 0.1\n"
                   "profile.n_theta = 8\n")
    blobs = []
    for name in ("d1", "d2"):
        out = tmp_path / name
        assert cli.main(["scaling", "--config", str(cfg), "--out", str(out),
                         "--quiet"]) == 0
        blobs.append((out / "study.json").read_bytes()
                     + (out / "study.csv").read_bytes())
    deterministic = blobs[0] == blobs[1]
    ok = (drift < 1e-6 and zeros_ok and 3.0 <= ratio <= 5.0 and deterministic)
    report(9, ok, f"energy drift {drift:.2e} (< 1e-6); exact zeros beyond "
                  f"stencil cone: {zeros_ok}; convergence ratio {ratio:.2f} "
                  f"(in [3,5]); bit-identical reruns: {deterministic}")
