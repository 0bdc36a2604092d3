"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``[ACCEPT n] PASS|FAIL ...`` line (visible without
``-s``) before asserting. Monte-Carlo criteria use the package's default master
seed; it is not tuned per criterion.
"""
import math
import time

import pytest

from psmetrology import experiment
from psmetrology.cli import EXIT_OK, main
from psmetrology.config import ExperimentConfig
from psmetrology.errors import DegeneratePostSelection
from psmetrology.estimator import EstimatorKind, run_estimator
from psmetrology.fisher import crb, fisher_multinomial, fisher_total
from psmetrology.forward import OpticalSetup, mean_momentum
from psmetrology.qcore import SAME, SIGMA3_MODE, noise_from_visibilities
from psmetrology.sampler import expected_counts

LAB = OpticalSetup()
PERFECT = LAB.with_perfect_visibility()
MODES = [SAME, SIGMA3_MODE]
VALIDATION_G = (0.0, 0.01, 0.05, 0.1, 0.3)
MC = dict(n_photons=100_000, n_reps=100, g_delta_true=0.1)


@pytest.fixture
def report(capsys):
    def _report(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n[ACCEPT {n:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return _report


def test_01_oracle_equivalence(report):
    start = time.perf_counter()
    res = experiment.oracle_check()
    elapsed = time.perf_counter() - start
    worst = res["overall"]
    ok = worst < 1e-8 and elapsed < 30.0
    report(1, "grid oracle vs closed forms", ok,
           f"max |dev| = {worst:.2e} (< 1e-8) over {res['n_points']} points in {elapsed:.1f} s (< 30 s)")


def test_02_fisher_decomposition_identity(report):
    worst, n = 0.0, 0
    for setup in (LAB, PERFECT):
        for mode in MODES:
            for deg in range(0, 181, 5):
                th = math.radians(deg)
                for g in VALIDATION_G:
                    try:
                        fb = fisher_total(g, th, mode, setup, "split", check_identity=False)
                    except DegeneratePostSelection:
                        continue
                    flat = fisher_multinomial(g, th, mode, setup)
                    rel = abs(flat - fb.f_total_split) / max(abs(flat), 1e-12)
                    worst = max(worst, rel)
                    n += 1
    report(2, "multinomial FI = p_f F_split + F_pf", worst < 1e-9, f"max relative dev {worst:.2e} (< 1e-9) over {n} points")


def test_03_qcrb_saturation(report):
    worst_dev, worst_ratio = 0.0, math.inf
    for mode in MODES:
        for deg in range(100, 171, 5):
            th = math.radians(deg)
            dev = abs(fisher_total(1e-3, th, mode, PERFECT).f_total - 4.0)
            half = abs(fisher_total(5e-4, th, mode, PERFECT).f_total - 4.0)
            worst_dev = max(worst_dev, dev)
            worst_ratio = min(worst_ratio, dev / half)
    # halving g must cut the deviation at least by ~4 (quadratic); Same mode decays faster
    ok = worst_dev < 1e-3 and worst_ratio > 3.8
    report(3, "F_ps -> 4 at perfect visibility", ok,
           f"max |F - 4| = {worst_dev:.2e} (< 1e-3) at g = 1e-3, smallest reduction on halving g = {worst_ratio:.2f} (quadratic = 4)")


def test_04_wva_limit(report):
    g = 1e-4
    worst = 0.0
    for deg in range(100, 171, 5):
        th = math.radians(deg)
        ratio = mean_momentum(g, th, SIGMA3_MODE, PERFECT) * PERFECT.delta / g
        worst = max(worst, abs(ratio + 1 / math.cos(th)) * abs(math.cos(th)))
    same_ok = True
    for deg in range(0, 181):
        for gg in (1e-4, 1e-2, 0.1, 0.3, 1.0):
            k = mean_momentum(gg, math.radians(deg), SAME, PERFECT) * PERFECT.delta
            same_ok &= abs(k) <= gg * (1 + 1e-12)
    report(4, "weak-value amplification limit", worst < 1e-3 and same_ok,
           f"Sigma3 max rel dev from -1/cos = {worst:.2e} (< 1e-3); Same |<k>| <= |g|: {same_ok}")


def test_05_estimator_round_trip(report):
    th = 2 * math.pi / 3
    worst = 0.0
    all_converged = True
    for mode in MODES:
        rec = expected_counts(0.1, th, mode, LAB, MC["n_photons"])
        for kind in EstimatorKind:
            res = run_estimator(kind, rec, th, mode, LAB)
            all_converged &= res.converged
            worst = max(worst, abs(res.g_delta_hat - 0.1))
    report(5, "estimators on expected counts", worst < 1e-6 and all_converged,
           f"max |g_hat - 0.1| = {worst:.2e} (< 1e-6), all converged: {all_converged}")


def test_06_crb_tracking(report):
    cfg = ExperimentConfig(theta_deg=tuple(float(d) for d in range(110, 171, 5)), estimators=("joint",), **MC)
    table = experiment.run_sweep(cfg)
    ratios = {(r["mode"], r["theta_deg"]): r["g_hat_std"] / r["crb"] for r in table.rows}
    bad = {k: round(v, 3) for k, v in ratios.items() if not 0.8 <= v <= 1.5}
    reference = crb(4.0, cfg.n_photons)
    ok = not bad and abs(reference - 1.5811e-3) < 1e-7
    report(6, "joint/exact std vs split-detector CRB", ok,
           f"std/crb in [{min(ratios.values()):.3f}, {max(ratios.values()):.3f}] (band [0.8, 1.5]) over {len(ratios)} cells; "
           f"outside: {bad or 'none'}; QCRB reference {reference:.4e}")


def test_07_wva_breakdown_region(report):
    cfg = ExperimentConfig(theta_deg=(95.0,), modes=("sigma3",), estimators=("ps", "meter"), **MC)
    table = experiment.run_sweep(cfg)
    ps, meter = table.rows
    mean_ok = abs(ps["g_hat_mean"] - 0.1) <= ps["three_sigma"]
    eff_ok = ps["g_hat_std"] <= 1.5 * ps["crb"]
    ill = meter["_failures"].get("IllConditioned", 0)
    meter_ok = ill >= 0.5 * cfg.n_reps or meter["g_hat_std"] >= 3 * ps["g_hat_std"]
    ratio = meter["g_hat_std"] / ps["g_hat_std"]
    report(7, "Sigma3 at 95 deg", mean_ok and eff_ok and meter_ok,
           f"PS mean {ps['g_hat_mean']:.5f} +- {ps['three_sigma']:.5f} (3 sigma); PS std/crb = {ps['g_hat_std'] / ps['crb']:.3f} (<= 1.5); "
           f"meter/PS std = {ratio:.2f} (>= 3) or IllConditioned {ill}/{cfg.n_reps} (>= 50%)")


def test_08_calibration(report):
    base = ExperimentConfig()
    d0 = base.setup.delta_f / 20
    res = experiment.calibrate_reference(base.replace(calibration_d0_true=d0, calibration_photons=1_000_000))
    z = (res.d0_hat - d0) / res.stderr
    report(8, "reference offset calibration", abs(z) < 3,
           f"d0 = {d0 * 1e6:.4f} um, d0_hat = {res.d0_hat * 1e6:.4f} +- {res.stderr * 1e6:.4f} um, z = {z:+.2f} (|z| < 3)")


def test_09_determinism(report, tmp_path, monkeypatch):
    import yaml

    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"theta_deg": [95, 120, 150, 175], "n_photons": 20_000, "n_reps": 10}))
    outputs = []
    for name, workers in (("serial_a", "1"), ("serial_b", "1"), ("parallel", "2")):
        monkeypatch.setenv(experiment.WORKERS_ENV, workers)
        code = main(["sweep", "--config", str(cfg), "--seed", "31337", "--out", str(tmp_path / name)])
        assert code == EXIT_OK
        outputs.append((tmp_path / name / "sweep.csv").read_bytes())
    repeat_ok = outputs[0] == outputs[1]
    parallel_ok = outputs[0] == outputs[2]
    report(9, "byte-identical sweeps", repeat_ok and parallel_ok,
           f"repeat identical: {repeat_ok}; serial vs 2 workers identical: {parallel_ok}")


def test_10_visibility_plumbing(report):
    noise = noise_from_visibilities(0.998, 0.966)
    nu0, nuh = noise.visibilities
    back = noise_from_visibilities(nu0, nuh)
    errs = [abs(noise.epsilon - 0.001), abs(noise.p_deph - (1 - 0.966 / 0.998)), abs(nu0 - 0.998), abs(nuh - 0.966),
            abs(back.epsilon - noise.epsilon), abs(back.p_deph - noise.p_deph)]
    ok = max(errs) < 1e-12 and f"{noise.p_deph:.6f}" == "0.032064"
    report(10, "visibilities <-> (epsilon, p)", ok,
           f"(epsilon, p) = ({noise.epsilon:.15g}, {noise.p_deph:.15g}); max round-trip error {max(errs):.1e} (< 1e-12)")
