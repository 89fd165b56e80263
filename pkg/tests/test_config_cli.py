import json

import numpy as np
import pytest
import yaml

from stochwave.cli import main
from stochwave.config import DEFAULTS, ConfigError, ExperimentConfig, load_config
from stochwave.grid import GridMismatchError, SpatialGrid
from stochwave.io import HashMismatchError, check_hash, read_csv_header, read_frames, write_frames, write_json


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def _minimal(**sections):
    d = {"model": {"nu": 1.0, "b": 2.0, "a": 0.25}, "grid": {"L": 40.0, "n": 1601},
         "noise": {"K": 64, "sigma": 0.25}, "run": {"epsilon": 0.01, "m": 100.0, "T": 5.0, "dt": 1e-3}}
    for k, v in sections.items():
        d[k] = {**d.get(k, {}), **v}
    return d


# ---------------------------------------------------------------- config

def test_defaults_validate():
    cfg = ExperimentConfig.from_dict(DEFAULTS)
    assert cfg.wave_speed == pytest.approx(0.5)
    assert len(cfg.hash) == 16


def test_hash_tracks_content():
    a = ExperimentConfig.from_dict(_minimal())
    b = ExperimentConfig.from_dict(_minimal())
    c = ExperimentConfig.from_dict(_minimal(run={"epsilon": 0.02}))
    assert a.hash == b.hash != c.hash


def test_missing_grid_names_field():
    d = _minimal()
    del d["grid"]
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(d)
    assert exc.value.field == "grid.L"


@pytest.mark.parametrize("section,values,field", [
    ("noise", {"r": 1.5}, "noise.r"),
    ("grid", {"L": 20.0}, "grid.L"),
    ("grid", {"n": 1600}, "grid.n"),
    ("run", {"dt": 0.0}, "run.dt"),
    ("model", {"a": 1.2}, "model.a"),
    ("run", {"eta": {"kind": "spike"}}, "run.eta"),
])
def test_field_errors(section, values, field):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(_minimal(**{section: values}))
    assert exc.value.field == field


def test_unknown_claim_section():
    d = _minimal()
    d["claims"] = {"telepathy": {}}
    with pytest.raises(ConfigError, match="claims.telepathy"):
        ExperimentConfig.from_dict(d)


def test_yaml_errors(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("model: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_eta_kinds(profile):
    cfg = ExperimentConfig.from_dict(_minimal())
    assert np.all(cfg.eta(profile) == 0)
    v = cfg.with_overrides({"run": {"eta": {"kind": "vhat_x", "amplitude": 0.5}}}).eta(profile)
    assert np.allclose(v, 0.5 * profile.vhat_x)
    bump = cfg.with_overrides({"run": {"eta": {"kind": "bump", "amplitude": 0.3, "center": 2.0}}}).eta(profile)
    assert bump[0] == bump[-1] == 0.0
    assert bump.max() == pytest.approx(0.3)


def test_seeds_are_indexed():
    s = ExperimentConfig.from_dict(_minimal()).seeds(3, start=5, master=9)
    assert [(p.master_seed, p.path_index) for p in s] == [(9, 5), (9, 6), (9, 7)]


# -------------------------------------------------------------------- io

def test_json_embeds_hash(tmp_path):
    p = write_json(tmp_path / "r.json", {"b": np.float64(1.5), "a": np.arange(2), "n": float("nan")},
                   config_hash="abc")
    doc = json.loads(p.read_text())
    assert doc == {"a": [0, 1], "b": 1.5, "config_hash": "abc", "n": "nan"}
    assert check_hash(p, "abc")["b"] == 1.5
    with pytest.raises(HashMismatchError):
        check_hash(p, "xyz")


def test_frames_roundtrip(tmp_path):
    g = SpatialGrid(10.0, 101)
    frames = np.random.default_rng(0).standard_normal((3, g.n))
    p = write_frames(tmp_path / "f.bin", frames, g)
    raw = p.read_bytes()
    assert raw[:8] == b"SWFRAME\x00"
    assert len(raw) == 32 + frames.size * 8
    assert np.array_equal(read_frames(p, g), frames)
    with pytest.raises(GridMismatchError):
        read_frames(p, SpatialGrid(10.0, 201))


# ------------------------------------------------------------------- cli

def test_profile_default(tmp_path, capsys):
    assert main(["profile", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "profile.txt").read_text()
    assert "c=0.5\n" in text
    rep = json.loads((tmp_path / "profile.json").read_text())
    assert rep["kappa_hat"] > 0 and rep["gamma_minus"] == pytest.approx(-0.5)


def test_profile_symmetric_case(tmp_path):
    cfg = _write(tmp_path, _minimal(model={"a": 0.5}))
    assert main(["profile", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "profile.txt").read_text()
    assert "rho is constant" in text
    assert json.loads((tmp_path / "o" / "profile.json").read_text())["rho_constant"] is True


def test_missing_section_exit_code(tmp_path, capsys):
    d = _minimal()
    del d["grid"]
    assert main(["profile", "--config", _write(tmp_path, d), "--out", str(tmp_path)]) == 2
    assert "grid.L" in capsys.readouterr().err


def _sim_cfg(tmp_path, **run):
    return _write(tmp_path, _minimal(run={"T": 0.2, "dt": 1e-3, **run}, outputs={"cadence": 10, "formats": ["csv", "json", "bin"]}))


def test_simulate_zero_noise_amplitude(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", _sim_cfg(tmp_path, epsilon=0.0), "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["sup_u_norm"] == 0.0


def test_simulate_rerun_identical(tmp_path):
    cfg = _sim_cfg(tmp_path)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--seed", "17", "--out", str(tmp_path / d)]) == 0
    for f in ("trajectory.csv", "summary.json", "u_frames.bin"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    hdr = read_csv_header(tmp_path / "a" / "trajectory.csv")
    assert hdr["seed"] == "17" and len(hdr["config_hash"]) == 16


def test_simulate_blowup_exit_code(tmp_path):
    d = _minimal(model={"b": 50.0}, run={"epsilon": 0.1, "m": 10.0, "T": 6.0, "dt": 0.5})
    out = tmp_path / "o"
    assert main(["simulate", "--config", _write(tmp_path, d), "--out", str(out)]) == 3
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "numerical_failure" and s["blowup_step"] >= 1


def test_verify_unknown_claim(tmp_path, capsys):
    assert main(["verify", "--claim", "telepathy", "--out", str(tmp_path)]) == 2
    assert "telepathy" in capsys.readouterr().err


def test_verify_speed(tmp_path):
    assert main(["verify", "--claim", "speed", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify_speed.json").read_text())
    assert 0.495 <= rep["measured"]["speed"] <= 0.505
    assert rep["anchor"] and rep["verdict"] == "pass"


def test_verify_variance_underpowered(tmp_path):
    assert main(["verify", "--claim", "variance", "--paths", "4", "--out", str(tmp_path)]) == 1
    rep = json.loads((tmp_path / "verify_variance.json").read_text())
    assert rep["verdict"] == "insufficient_power"


def test_verify_ortho_negative_control(tmp_path):
    d = _minimal(run={"project_u0": False})
    d["claims"] = {"ortho": {"n_paths": 1}}
    assert main(["verify", "--claim", "ortho", "--config", _write(tmp_path, d), "--out", str(tmp_path)]) == 1
    rep = json.loads((tmp_path / "verify_ortho.json").read_text())
    assert rep["verdict"] == "fail" and rep["measured"]["max_relative_pairing"] > 1e-8


def test_verify_baseline_hash_guard(tmp_path, capsys):
    assert main(["verify", "--claim", "kernel", "--out", str(tmp_path / "a")]) == 0
    base = str(tmp_path / "a" / "verify_kernel.json")
    assert main(["verify", "--claim", "kernel", "--out", str(tmp_path / "b"), "--baseline", base]) == 0
    other = _write(tmp_path, _minimal(run={"epsilon": 0.02}))
    assert main(["verify", "--claim", "kernel", "--config", other, "--out", str(tmp_path / "c"),
                 "--baseline", base]) == 2
    assert "config hash" in capsys.readouterr().err


def test_sweep_independent_of_threads(tmp_path):
    d = _minimal(run={"T": 0.05, "dt": 1e-3}, sweep={"epsilons": [0.02, 0.01, 0.005], "n_paths": 40},
                 outputs={"cadence": 5})
    cfg = _write(tmp_path, d)
    for th in ("1", "3"):
        assert main(["sweep", "--config", cfg, "--threads", th, "--out", str(tmp_path / th)]) == 0
    for f in ("sweep.json", "sweep.csv"):
        assert (tmp_path / "1" / f).read_bytes() == (tmp_path / "3" / f).read_bytes()
