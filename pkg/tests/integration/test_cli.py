import json
from pathlib import Path

import pytest

from cli.main import main

SMALL_GROUND = {"points": 512, "extent": 25.0}
SMALL_GRID = {"kind": "radial", "dims": [512], "extent": [25.0]}


def _config(tmp_path: Path, name: str = "exp.json", **overrides) -> Path:
    config = {
        "params": {"n": 3, "b": 0.5, "alpha": 2.0},
        "grid": SMALL_GRID,
        "ground": SMALL_GROUND,
        "initial": {"preset": "ground_state_multiple", "c": 0.9},
        "controls": {"dt": 1e-3, "t_end": 0.05, "sample_every": 10, "adaptive": False},
    }
    config.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return path


def _stdout_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


def test_ground_writes_summary_and_field(tmp_path, capsys):
    out = tmp_path / "gs"

    code = main(["ground", "--config", str(_config(tmp_path)), "--out", str(out)])

    assert code == 0
    assert {p.name for p in out.iterdir()} == {"gs.json", "q.field", "q.csv"}
    summary = json.loads((out / "gs.json").read_text())
    assert summary["q_file"] == "q.field"
    assert summary["pohozaev"]["r1"] < 1e-2
    assert "Ground state" in capsys.readouterr().out


def test_second_write_to_same_out_is_refused(tmp_path, capsys):
    config = str(_config(tmp_path))
    out = str(tmp_path / "gs")

    assert main(["ground", "--config", config, "--out", out]) == 0
    capsys.readouterr()

    assert main(["ground", "--config", config, "--out", out]) == 3
    assert _stdout_json(capsys)["exit_code"] == 3

    assert main(["ground", "--config", config, "--out", out, "--force"]) == 0


def test_out_of_range_parameter(tmp_path, capsys):
    """b = 2.5 in N = 3 is refused before anything is computed."""
    config = _config(tmp_path, params={"n": 3, "b": 2.5, "alpha": 2.0})

    code = main(["ground", "--config", str(config), "--out", str(tmp_path / "gs")])

    payload = _stdout_json(capsys)
    assert code == 2
    assert payload["status"] == "error"
    assert payload["reason"] == "OutOfRange(b)"
    assert not (tmp_path / "gs").exists()


def test_unknown_config_key_is_invalid(tmp_path, capsys):
    config = _config(tmp_path, colour="blue")

    code = main(["classify", "--config", str(config)])

    assert code == 2
    assert _stdout_json(capsys)["reason"] == "ConfigInvalid"


def test_classify_prints_the_verdict(tmp_path, capsys):
    code = main(["classify", "--config", str(_config(tmp_path))])

    payload = _stdout_json(capsys)
    assert code == 0
    assert payload["verdict"]["theorem"] == "BelowGlobal"
    assert payload["verdict"]["predicted_fate"] == "GlobalScatter"
    assert payload["verdict"]["symmetry_route"] == "Radial"
    assert payload["above"] is None


def test_classify_is_deterministic(tmp_path, capsys):
    config = str(_config(tmp_path, initial={"preset": "ground_state_multiple", "c": 1.1}))

    main(["classify", "--config", config])
    first = capsys.readouterr().out
    main(["classify", "--config", config])
    second = capsys.readouterr().out

    assert first == second
    assert json.loads(first)["verdict"]["theorem"] == "BelowBlowup"


def test_classify_against_a_stored_ground_state(tmp_path, capsys):
    config = _config(tmp_path)
    main(["ground", "--config", str(config), "--out", str(tmp_path / "gs")])
    capsys.readouterr()
    recipe = tmp_path / "chirped.json"
    recipe.write_text(json.dumps({"preset": "ground_state_multiple", "c": 0.95, "phase_lambda": 0.5}))

    code = main(
        [
            "classify",
            "--config",
            str(config),
            "--ground",
            str(tmp_path / "gs" / "gs.json"),
            "--data",
            str(recipe),
        ]
    )

    payload = _stdout_json(capsys)
    assert code == 0
    assert payload["verdict"]["theorem"] == "AboveScatter"
    assert payload["above"]["consistent"] is True


def test_classify_takes_a_preset_name_for_data(tmp_path, capsys):
    config = str(_config(tmp_path))

    code = main(["classify", "--config", config, "--data", "ground_state_multiple"])

    payload = _stdout_json(capsys)
    assert code == 0
    assert payload["verdict"]["theorem"] == "AtThreshold2"
    assert set(payload["verdict"]["margins"]) == {"ener-at", "grad-at-1", "grad-at-2", "grad-at-3"}

    inline = json.dumps({"preset": "ground_state_multiple", "c": 0.9})
    assert main(["classify", "--config", config, "--data", inline]) == 0
    assert _stdout_json(capsys)["verdict"]["theorem"] == "BelowGlobal"


def test_unknown_preset_name_is_invalid(tmp_path, capsys):
    code = main(["classify", "--config", str(_config(tmp_path)), "--data", "sech"])

    assert code == 2
    assert _stdout_json(capsys)["reason"] == "ConfigInvalid"


def test_evolve_then_report(tmp_path, capsys):
    config = _config(tmp_path)
    out = tmp_path / "run"

    assert main(["evolve", "--config", str(config), "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"diag.csv", "final.field", "final.csv", "fate.json", "verdict.json"}
    fate = json.loads((out / "fate.json").read_text())
    assert fate["fate"] == "RanToEnd"
    assert fate["steps"] == 50
    assert fate["samples"] == 6
    capsys.readouterr()

    assert main(["report", "--run", str(out)]) == 0
    assert "mass drift" in capsys.readouterr().out


def test_ground_needs_a_config():
    with pytest.raises(SystemExit) as exc:
        main(["ground"])

    assert exc.value.code == 2


def test_classify_needs_params_or_config(capsys):
    assert main(["classify", "--data", "u0.field"]) == 2
    assert _stdout_json(capsys)["reason"] == "ConfigInvalid"
