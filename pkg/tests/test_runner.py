import json

import pytest

from rydsim import cli
from rydsim.runner import (CONFIG_VERSION, ConfigError, merge_config,
                           preset_config, presets, run, validate_config)


REQUIRED_PRESETS = {"scan-detuning", "scan-duration", "time-trace",
                    "spatial-map", "classical-diagram", "shorttime-check",
                    "spectrum-2x2"}


def tiny_single(**over):
    cfg = {
        "pipeline": "single",
        "geometry": {"kind": "chain", "dimensions": [3]},
        "evolution": {"n_steps": 60},
    }
    return merge_config(merge_config(preset_defaults(), cfg), over or None)


def preset_defaults():
    # validate_config fills defaults; start from an empty override
    return {}


def test_presets_cover_standard_analyses():
    assert REQUIRED_PRESETS <= set(presets())
    for name in presets():
        validate_config(preset_config(name))


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset_config("no-such-analysis")


def test_merge_is_recursive():
    merged = merge_config({"a": {"x": 1, "y": 2}, "b": 3}, {"a": {"y": 5}})
    assert merged == {"a": {"x": 1, "y": 5}, "b": 3}


@pytest.mark.parametrize("patch,field", [
    ({"pipeline": "bogus"}, "pipeline"),
    ({"geometry": {"kind": "hex"}}, "geometry.kind"),
    ({"geometry": {"dimensions": [0]}}, "dimensions"),
    ({"schedule": {"t_sweep_us": -0.1}}, "schedule.t_sweep_us"),
    ({"couplings": {"mode": "sparse"}}, "couplings.mode"),
    ({"evolution": {"method": "magic"}}, "evolution.method"),
    ({"evolution": {"n_steps": 0}}, "evolution.n_steps"),
    ({"measurement": {"epsilon": 1.5}}, "measurement.epsilon"),
])
def test_validation_names_the_field(patch, field):
    cfg = merge_config({"pipeline": "single",
                        "geometry": {"kind": "chain", "dimensions": [3]}},
                       patch)
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    assert field in str(err.value)


def test_master_equation_size_guard():
    cfg = {"pipeline": "single",
           "geometry": {"kind": "square", "dimensions": [3, 3]},
           "evolution": {"method": "master", "gamma_over_u": 1.0}}
    with pytest.raises(ConfigError) as err:
        validate_config(cfg)
    assert "master" in str(err.value)


def test_spectrum_pipeline_needs_2x2():
    cfg = {"pipeline": "spectrum-2x2",
           "geometry": {"kind": "chain", "dimensions": [4]}}
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_invalid_config_writes_nothing(tmp_path):
    out = tmp_path / "bundle"
    with pytest.raises(ConfigError):
        run({"pipeline": "single", "schedule": {"t_rise_us": -1}}, out)
    assert not out.exists() or not list(out.iterdir())


def test_single_pipeline_bundle(tmp_path):
    cfg = tiny_single(measurement={"n_shots": 50})
    summary = run(cfg, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"geometry.json", "map.csv", "couplings.csv", "histogram.csv",
            "shots.txt", "summary.json", "manifest.json"} <= names
    assert 0.0 <= summary["density"] <= 1.0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_version"] == CONFIG_VERSION
    assert sorted(manifest["outputs"]) == manifest["outputs"]
    assert set(manifest["outputs"]) == names
    assert manifest["config"]["evolution"]["n_steps"] == 60


def test_reruns_are_byte_identical(tmp_path):
    cfg = tiny_single(measurement={"n_shots": 20},
                      evolution={"method": "mcwf", "gamma_over_u": 1.0,
                                 "n_trajectories": 8, "n_steps": 40})
    a, b = tmp_path / "a", tmp_path / "b"
    run(cfg, a)
    run(cfg, b)
    for p in sorted(a.iterdir()):
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_classical_diagram_needs_no_schedule(tmp_path):
    cfg = {"pipeline": "classical-diagram",
           "geometry": {"kind": "square", "dimensions": [4, 4],
                        "boundary": "open"}}
    run(cfg, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"plateaus_open.csv", "plateaus_periodic.csv"} <= names


def test_cli_presets_and_exit_codes(tmp_path, capsys):
    assert cli.main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "classical-diagram" in out

    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_single()))
    assert cli.main(["run", "--config", str(cfg_path),
                     "--out", str(tmp_path / "bundle")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert "density" in summary

    cfg_path.write_text(json.dumps({"pipeline": "nope"}))
    assert cli.main(["run", "--config", str(cfg_path),
                     "--out", str(tmp_path / "b2")]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_preset_by_name(tmp_path, capsys):
    assert cli.main(["classical-diagram", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "plateaus_periodic.csv").exists()


def test_seed_override_changes_shots(tmp_path):
    cfg = tiny_single(measurement={"n_shots": 30})
    run(cfg, tmp_path / "a")
    run(merge_config(cfg, {"seed": 9}), tmp_path / "b")
    sa = (tmp_path / "a" / "shots.txt").read_text()
    sb = (tmp_path / "b" / "shots.txt").read_text()
    assert sa != sb
