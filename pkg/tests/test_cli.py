"""Command-line scenario runner: exit codes, artifacts, determinism."""

import json

import pytest

from madelung_lab.cli import OUT_ENV_VAR, load_config, main

SMOKE = {
    "grid": {"n_points": 2048},
    "time": {"snapshots": [0.0, 1.0, 2.0]},
    "ensemble": {"n_samples": 20000},
}

# second-order time stepping at a deliberately coarse dt: the identities
# themselves hold, the discretization residuals exceed the row tolerances
COARSE = {
    "grid": {"n_points": 512, "boundary": "vanishing"},
    "scheme": "central4",
    "time": {"dt": 0.05, "snapshots": [1.0]},
    "ensemble": {"n_samples": 5000},
}


def _write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture()
def smoke_path(tmp_path):
    return _write(tmp_path, "smoke.json", SMOKE)


def _summary(out_dir):
    return json.loads((out_dir / "summary.json").read_text())


def _stderr_json(capsys):
    captured = capsys.readouterr()
    return json.loads(captured.err), captured.out


# --- verify -----------------------------------------------------------------


def test_verify_passes_and_writes_artifacts(tmp_path, smoke_path, capsys):
    out = tmp_path / "out"
    assert main(["verify", "--config", smoke_path, "--out", str(out)]) == 0
    assert "overall: PASS" in capsys.readouterr().out

    summary = _summary(out)
    assert summary["all_passed"] is True
    assert len(summary["rows"]) == 67
    assert all({"identity", "value", "tolerance", "passed"} <= set(r) for r in summary["rows"])
    assert len(summary["config_sha256"]) == 64

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "verify"
    assert manifest["config_sha256"] == summary["config_sha256"]
    for name in (
        "config.json",
        "summary.json",
        "summary.txt",
        "moments.json",
        "uncertainty.json",
        "consistency.json",
        "snapshot_000.csv",
        "fields_000.csv",
        "closed_form_000.csv",
        "ensemble_000.csv",
        "estimate_flow_000.csv",
        "estimate_spread_000.csv",
    ):
        assert name in manifest["artifacts"], name
        assert (out / name).exists()

    # execution plumbing stays out of the hashed scenario
    scenario = json.loads((out / "config.json").read_text())
    assert "out_dir" not in scenario
    assert "threads" not in scenario["ensemble"]


def test_verify_reruns_byte_identical_across_threads(tmp_path, smoke_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--config", smoke_path, "--out", str(out1), "--threads", "1"]) == 0
    assert main(["verify", "--config", smoke_path, "--out", str(out2), "--threads", "4"]) == 0
    names1 = sorted(p.name for p in out1.iterdir())
    assert names1 == sorted(p.name for p in out2.iterdir())
    for name in names1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_verify_reports_honest_failures_at_coarse_dt(tmp_path, capsys):
    path = _write(tmp_path, "coarse.json", COARSE)
    out = tmp_path / "out"
    assert main(["verify", "--config", path, "--out", str(out)]) == 1
    assert "overall: FAIL" in capsys.readouterr().out
    summary = _summary(out)
    assert summary["all_passed"] is False
    failed = {r["identity"] for r in summary["rows"] if not r["passed"]}
    assert "width-spread[t=1]" in failed
    assert "force-decomposition[t=1]" in failed
    assert len(failed) >= 5


# --- configuration errors ---------------------------------------------------


def test_config_violations_are_aggregated(tmp_path, capsys):
    path = _write(
        tmp_path,
        "bad.json",
        {
            "grid": {"n_points": 7, "boundary": "open"},
            "initial": {"sigma0": -1},
            "time": {"dt": 0.1, "snapshots": [0.0, 0.25]},
        },
    )
    assert main(["verify", "--config", path, "--out", str(tmp_path / "o")]) == 2
    err, _ = _stderr_json(capsys)
    assert err["error"] == "ConfigError"
    assert len(err["violations"]) == 4
    blob = " ".join(err["violations"])
    for fragment in ("n_points", "boundary", "sigma0", "integer multiple"):
        assert fragment in blob


def test_unknown_config_keys_are_rejected(tmp_path, capsys):
    path = _write(tmp_path, "bad.json", {"grid": {"dx": 0.1}, "verbosity": 3})
    assert main(["verify", "--config", path]) == 2
    err, _ = _stderr_json(capsys)
    assert sorted(err["violations"]) == [
        "unknown config key 'verbosity'",
        "unknown config key grid.dx",
    ]


def test_diffusion_regime_rejects_zero_snapshot(tmp_path, capsys):
    path = _write(
        tmp_path,
        "bad.json",
        {"regime": "diffusion", "diffusion_coeff": 0.25, "time": {"snapshots": [0.0, 1.0]}},
    )
    assert main(["verify", "--config", path]) == 2
    err, _ = _stderr_json(capsys)
    assert any("no width at t = 0" in v for v in err["violations"])


def test_runtime_failures_exit_two_with_json(tmp_path, capsys):
    # validation passes, then the initial packet has visible edge density
    path = _write(tmp_path, "narrow.json", {"grid": {"x_min": -5.0, "x_max": 5.0, "n_points": 64}})
    assert main(["verify", "--config", path, "--out", str(tmp_path / "o")]) == 2
    err, _ = _stderr_json(capsys)
    assert err["error"] == "GridTooNarrow"
    assert "grid" in err["message"]


def test_load_config_applies_overrides(smoke_path):
    config = load_config(smoke_path, seed=9, scheme="central4", threads=3)
    assert (config.n_points, config.seed, config.scheme, config.threads) == (2048, 9, "central4", 3)
    defaults = load_config()
    assert (defaults.n_points, defaults.seed, defaults.sigma0) == (4096, 42, 1.0)


# --- classical regimes ------------------------------------------------------


def test_diffusion_regime_checks_width_scaling(tmp_path, capsys):
    path = _write(
        tmp_path,
        "diff.json",
        {"regime": "diffusion", "diffusion_coeff": 0.25, "time": {"snapshots": [1.0, 2.0]}},
    )
    out = tmp_path / "out"
    assert main(["verify", "--config", path, "--out", str(out)]) == 0
    capsys.readouterr()
    summary = _summary(out)
    assert summary["regime"] == "diffusion"
    names = [r["identity"] for r in summary["rows"]]
    assert names == [
        "width-growth[t=1]",
        "velocity-width-consistency[t=1]",
        "width-growth[t=2]",
        "velocity-width-consistency[t=2]",
    ]
    assert (out / "sigma_curve.csv").exists()
    assert (out / "velocity_000.csv").exists()


def test_ballistic_regime_checks_width_scaling(tmp_path, capsys):
    path = _write(
        tmp_path,
        "bal.json",
        {"regime": "ballistic", "spreading_rate": 0.5, "time": {"snapshots": [0.0, 1.0]}},
    )
    out = tmp_path / "out"
    assert main(["verify", "--config", path, "--out", str(out)]) == 0
    capsys.readouterr()
    summary = _summary(out)
    assert summary["all_passed"] is True
    assert len(summary["rows"]) == 4


# --- sweeps -----------------------------------------------------------------


def _sweep_rows(out_dir):
    lines = (out_dir / "sweep.csv").read_text().splitlines()
    cols = lines[0].split(",")
    assert cols == [
        "parameter", "value", "dx", "n_points", "n_samples", "seed", "time",
        "sigma_rel_err", "decomp_max_residual", "x3_moment", "x3_target",
        "x3_rel_err", "stderr_center",
    ]
    return [dict(zip(cols, line.split(","))) for line in lines[1:]]


def test_sweep_resolution_shows_fourth_order_decay(tmp_path, capsys):
    path = _write(tmp_path, "sw.json", {"scheme": "central4", "ensemble": {"n_samples": 20000}})
    out = tmp_path / "out"
    rc = main(["sweep", "--config", path, "--out", str(out),
               "--parameter", "n_points", "--values", "1024,2048,4096"])
    assert rc == 0
    assert capsys.readouterr().out.startswith("parameter,")
    rows = _sweep_rows(out)
    residuals = [float(r["decomp_max_residual"]) for r in rows]
    for coarse, fine in zip(residuals, residuals[1:]):
        assert 8.0 < coarse / fine < 32.0  # dx^4 halving


def test_sweep_samples_shows_root_n_error_decay(tmp_path, capsys):
    path = _write(tmp_path, "sw.json", {})
    out = tmp_path / "out"
    rc = main(["sweep", "--config", path, "--out", str(out),
               "--parameter", "n_samples", "--values", "12500,50000,200000"])
    assert rc == 0
    capsys.readouterr()
    errors = [float(r["stderr_center"]) for r in _sweep_rows(out)]
    for small, big in zip(errors, errors[1:]):
        assert 1.7 < small / big < 2.4  # quadrupled samples halve the error


def test_sweep_cubic_moment_tracks_hbar_squared(tmp_path, capsys):
    path = _write(tmp_path, "sw.json", {"ensemble": {"n_samples": 5000}})
    out = tmp_path / "out"
    rc = main(["sweep", "--config", path, "--out", str(out),
               "--parameter", "hbar", "--values", "1,2"])
    assert rc == 0
    capsys.readouterr()
    rows = _sweep_rows(out)
    assert float(rows[0]["x3_target"]) == pytest.approx(-1.5, rel=1e-12)
    assert float(rows[1]["x3_target"]) == pytest.approx(-6.0, rel=1e-12)
    assert all(float(r["x3_rel_err"]) < 1e-6 for r in rows)


def test_sweep_rejects_unknown_parameter(tmp_path, smoke_path, capsys):
    rc = main(["sweep", "--config", smoke_path, "--out", str(tmp_path / "o"),
               "--parameter", "bogus", "--values", "1,2"])
    assert rc == 2
    err, _ = _stderr_json(capsys)
    assert err["error"] == "UnknownParameter"
    assert "bogus" in err["message"]


# --- artifact-only subcommands ----------------------------------------------


def test_fields_subcommand_writes_solver_artifacts(tmp_path, smoke_path, capsys):
    out = tmp_path / "out"
    assert main(["fields", "--config", smoke_path, "--out", str(out)]) == 0
    assert "wrote" in capsys.readouterr().out
    for name in ("snapshot_000.csv", "snapshot_manifest.json", "fields_002.csv", "closed_form_002.csv"):
        assert (out / name).exists()
    assert json.loads((out / "manifest.json").read_text())["command"] == "fields"
    assert not (out / "summary.json").exists()


def test_ensemble_subcommand_writes_sampling_artifacts(tmp_path, smoke_path, capsys):
    out = tmp_path / "out"
    assert main(["ensemble", "--config", smoke_path, "--out", str(out)]) == 0
    capsys.readouterr()
    for name in ("ensemble_000.csv", "ensemble_000.json", "estimate_flow_000.csv"):
        assert (out / name).exists()
    sidecar = json.loads((out / "ensemble_000.json").read_text())
    assert sidecar["seed"] == 42 and sidecar["n_samples"] == 20000


@pytest.mark.parametrize("command", ["fields", "ensemble", "sweep"])
def test_artifact_subcommands_require_quantum_regime(tmp_path, capsys, command):
    path = _write(
        tmp_path,
        "diff.json",
        {"regime": "diffusion", "diffusion_coeff": 0.25, "time": {"snapshots": [1.0]}},
    )
    args = [command, "--config", path, "--out", str(tmp_path / "o")]
    if command == "sweep":
        args += ["--parameter", "sigma0", "--values", "1"]
    assert main(args) == 2
    err, _ = _stderr_json(capsys)
    assert err["error"] == "MadelungLabError"
    assert "quantum" in err["message"]


# --- plots ------------------------------------------------------------------


def test_plot_renders_deterministic_svgs(tmp_path, smoke_path, capsys):
    out = tmp_path / "out"
    assert main(["fields", "--config", smoke_path, "--out", str(out)]) == 0
    assert main(["plot", "--config", smoke_path, "--out", str(out)]) == 0
    capsys.readouterr()
    names = ("fields.svg", "pressure_partition.svg", "sigma_regimes.svg")
    first = {n: (out / n).read_bytes() for n in names}
    assert all(first.values())
    assert main(["plot", "--config", smoke_path, "--out", str(out)]) == 0
    capsys.readouterr()
    assert {n: (out / n).read_bytes() for n in names} == first


def test_plot_without_artifacts_exits_two(tmp_path, smoke_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["plot", "--config", smoke_path, "--out", str(tmp_path / "empty")]) == 2
    err, _ = _stderr_json(capsys)
    assert err["error"] == "MissingArtifact"


# --- output directory precedence --------------------------------------------


def test_out_dir_precedence(tmp_path, smoke_path, monkeypatch, capsys):
    env_dir = tmp_path / "from_env"
    flag_dir = tmp_path / "from_flag"
    monkeypatch.setenv(OUT_ENV_VAR, str(env_dir))
    assert main(["fields", "--config", smoke_path]) == 0
    assert (env_dir / "manifest.json").exists()
    assert main(["fields", "--config", smoke_path, "--out", str(flag_dir)]) == 0
    assert (flag_dir / "manifest.json").exists()
    capsys.readouterr()
