import json
import math
from pathlib import Path

import pytest

from psmetrology import experiment
from psmetrology.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from psmetrology.config import ExperimentConfig, load_config
from psmetrology.errors import ConfigError
from psmetrology.sampler import RNG_ALGORITHM

SMALL = dict(theta_deg=(100.0, 135.0, 170.0), n_photons=20_000, n_reps=8)


@pytest.fixture(scope="module")
def default_sweep():
    return experiment.run_sweep(ExperimentConfig())


def test_default_sweep_shape(default_sweep):
    cfg = ExperimentConfig()
    assert len(default_sweep.rows) == len(cfg.theta_deg) * len(cfg.modes) * len(cfg.estimators) == 37 * 2 * 3
    assert default_sweep.columns == experiment.SWEEP_COLUMNS


def _row(table, deg, mode, est):
    [row] = [r for r in table.rows if r["theta_deg"] == deg and r["mode"] == mode and r["estimator"] == est]
    return row


def test_wva_gap_row(default_sweep):
    ps = _row(default_sweep, 95.0, "sigma3", "ps")
    meter = _row(default_sweep, 95.0, "sigma3", "meter")
    assert abs(ps["g_hat_mean"] - 0.1) <= ps["three_sigma"]
    # the meter readout is unreliable next to the post-selection statistics
    assert meter["n_failed"] >= 50 or meter["g_hat_std"] >= 3 * ps["g_hat_std"]


def test_same_mode_joint_tracks_bound(default_sweep):
    away = [r for r in default_sweep.rows if r["mode"] == "same" and r["estimator"] == "joint"
            and min(abs(r["theta_deg"] - d) for d in (0, 90, 180)) >= 10]
    ratios = {r["theta_deg"]: r["g_hat_std"] / r["crb"] for r in away}
    assert all(v <= 1.5 for v in ratios.values()), ratios


def test_degenerate_cells_are_recorded_not_fatal(default_sweep):
    row = _row(default_sweep, 90.0, "sigma3", "meter")
    assert row["n_failed"] == 100
    assert math.isnan(row["g_hat_mean"])
    assert row["_failures"] == {"IllConditioned": 100}


def test_serial_and_parallel_agree():
    cfg = ExperimentConfig(**SMALL)
    serial = experiment.run_sweep(cfg, workers=1)
    parallel = experiment.run_sweep(cfg, workers=2)
    key = lambda t: [{k: v for k, v in r.items()} for r in t.rows]  # noqa: E731
    assert repr(key(serial)) == repr(key(parallel))


def test_worker_env(monkeypatch):
    monkeypatch.setenv(experiment.WORKERS_ENV, "3")
    assert experiment.worker_count() == 3
    monkeypatch.setenv(experiment.WORKERS_ENV, "many")
    assert experiment.worker_count() == 1


def _write_config(tmp_path, **kw):
    import yaml

    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(kw))
    return path


def test_sweep_csv_is_byte_identical(tmp_path):
    cfg = _write_config(tmp_path, **{**SMALL, "theta_deg": list(SMALL["theta_deg"])})
    for out in ("a", "b"):
        assert main(["sweep", "--config", str(cfg), "--seed", "77", "--out", str(tmp_path / out)]) == EXIT_OK
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    meta = json.loads((tmp_path / "a" / "sweep.meta.json").read_text())
    assert meta["master_seed"] == 77
    assert meta["rng_algorithm"] == RNG_ALGORITHM
    assert meta["config"]["n_reps"] == 8


def test_seed_changes_data(tmp_path):
    cfg = _write_config(tmp_path, **{**SMALL, "theta_deg": [120]})
    main(["sweep", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "a")])
    main(["sweep", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "sweep.csv").read_bytes() != (tmp_path / "b" / "sweep.csv").read_bytes()


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_emit_round_trip(fmt, tmp_path):
    table = experiment.run_sweep(ExperimentConfig(**SMALL))
    paths = experiment.emit(table, fmt, tmp_path, "sweep")
    back = experiment.read_table(paths[0])
    assert back.columns == table.columns
    assert len(back.rows) == len(table.rows)
    for orig, parsed in zip(table.rows, back.rows):
        for c in table.columns:
            a, b = orig[c], parsed[c]
            if isinstance(a, float) and math.isnan(a):
                assert math.isnan(b)
            else:
                assert a == b, c
    assert back.metadata["master_seed"] == table.metadata["master_seed"]
    assert "rng_algorithm" in back.metadata


def test_emit_float_precision(tmp_path):
    table = experiment.ResultTable(["theta_deg", "crb"], [{"theta_deg": 0.1, "crb": 1 / 3}], {"k": 1})
    [csv_path, _] = experiment.emit(table, "csv", tmp_path, "t")
    assert csv_path.read_text().splitlines()[1] == "0.10000000000000001,0.33333333333333331"


def test_emit_json_nan_is_null(tmp_path):
    table = experiment.ResultTable(["crb"], [{"crb": math.nan}], {})
    [path] = experiment.emit(table, "json", tmp_path, "t")
    assert json.loads(path.read_text())["rows"][0]["crb"] is None


def test_emit_empty_table(tmp_path):
    with pytest.raises(ValueError):
        experiment.emit(experiment.ResultTable(["a"], [], {}), "csv", tmp_path, "t")


def test_emit_io_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    table = experiment.ResultTable(["a"], [{"a": 1.0}], {})
    with pytest.raises(OSError, match="file"):
        experiment.emit(table, "csv", blocker / "sub", "t")


def test_calibration_unbiased_and_offset():
    base = ExperimentConfig()
    res = experiment.calibrate_reference(base)
    assert abs(res.d0_hat) < 3 * res.stderr
    offset = base.setup.delta_f / 20
    res = experiment.calibrate_reference(base.replace(calibration_d0_true=offset))
    assert abs(res.d0_hat - offset) < 3 * res.stderr


def test_calibration_error_scales_inverse_sqrt():
    cfg = ExperimentConfig(calibration_d0_true=ExperimentConfig().setup.delta_f / 20)
    a = experiment.calibrate_reference(cfg, 250_000)
    b = experiment.calibrate_reference(cfg, 1_000_000)
    # the binomial error also depends on the imbalance itself, but only at O(imbalance^2 / n)
    assert a.stderr / b.stderr == pytest.approx(2.0, rel=1e-2)


def test_fisher_curves_table(tmp_path):
    cfg = ExperimentConfig(theta_deg=(0.0, 90.0, 135.0))
    table = experiment.fisher_curves(cfg)
    assert len(table.rows) == 6
    row = [r for r in table.rows if r["theta_deg"] == 135.0 and r["mode"] == "same"][0]
    assert row["F_total_split"] == pytest.approx(row["pf_F_split"] + row["F_pf"])
    assert row["crb_total_split"] == pytest.approx(1 / math.sqrt(cfg.n_photons * row["F_total_split"]))


def test_cli_sweep_filters_and_plots(tmp_path):
    code = main(["sweep", "--out", str(tmp_path), "--mode", "sigma3", "--estimator", "ps",
                 "--format", "json", "--plot", "--config", str(_write_config(tmp_path, **{**SMALL, "theta_deg": [120, 150]}))])
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "sweep.json").read_text())
    assert {(r["mode"], r["estimator"]) for r in doc["rows"]} == {("sigma3", "ps")}
    assert (tmp_path / "sweep_estimates.png").stat().st_size > 0
    assert (tmp_path / "sweep_uncertainty.png").stat().st_size > 0


def test_cli_calibrate_and_fisher(tmp_path, capsys):
    assert main(["calibrate", "--out", str(tmp_path)]) == EXIT_OK
    assert "d0_hat" in capsys.readouterr().out
    assert (tmp_path / "calibration.csv").exists()
    cfg = _write_config(tmp_path, theta_deg={"start": 100, "stop": 170, "step": 35})
    assert main(["fisher-curves", "--config", str(cfg), "--out", str(tmp_path), "--plot"]) == EXIT_OK
    assert (tmp_path / "fisher_curves.png").exists()
    assert len(experiment.read_table(tmp_path / "fisher_curves.csv").rows) == 6


@pytest.mark.parametrize(
    "argv",
    [["sweep", "--variant", "quadratic"], ["sweep", "--seed", "-1"], ["sweep", "--config", "/nonexistent.yaml"], ["bogus"]],
)
def test_cli_config_errors(argv):
    # argparse rejections exit from inside the parser; config-file errors return
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_CONFIG


@pytest.mark.parametrize("body", ["n_reps: 1\n", "unknown_key: 3\n", "theta_deg: []\n", "- a\n- b\n", "nu0: [\n",
                                  "theta_deg: {start: 0, stop: 10, step: 0}\n", "n_photons: 2.5\n"])
def test_bad_config_files(body, tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(body)
    with pytest.raises(ConfigError):
        load_config(path)
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_partial_failure_exit_code(tmp_path):
    cfg = _write_config(tmp_path, theta_deg=[90], n_reps=4, n_photons=1000)
    code = main(["sweep", "--config", str(cfg), "--mode", "sigma3", "--estimator", "meter", "--out", str(tmp_path)])
    assert code == EXIT_PARTIAL
    # the table is still written
    assert (tmp_path / "sweep.csv").exists()


def test_theta_range_expands_inclusively(tmp_path):
    cfg = load_config(_write_config(tmp_path, theta_deg={"start": 0, "stop": 180, "step": 5}))
    assert cfg.theta_deg == ExperimentConfig().theta_deg


def test_config_defaults_are_setup_constants():
    cfg = ExperimentConfig()
    assert (cfg.delta, cfg.wavelength, cfg.focal_length) == (286e-6, 650e-9, 0.25)
    assert (cfg.nu0, cfg.nu_half, cfg.n_photons, cfg.n_reps) == (0.998, 0.966, 100_000, 100)
    assert cfg.setup.noise.epsilon == pytest.approx(0.001)
