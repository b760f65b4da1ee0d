import numpy as np
import pytest

from engine.cache.store import GROUND_CSV, GROUND_JSON, ResultStore, load_ground_state, load_model
from inls.errors import ConfigInvalid, OutputConflict
from inls.grid import Field, Grid, GridKind, mesh
from inls.groundstate import GroundStateSummary
from inls.model import ModelParams


def test_claim_refuses_a_used_directory(tmp_path):
    (tmp_path / "old.csv").write_text("t\n")

    with pytest.raises(OutputConflict) as exc:
        ResultStore(tmp_path).claim()

    assert exc.value.exit_code == 3
    assert ResultStore(tmp_path, force=True).claim().root == tmp_path


def test_nothing_is_written_before_a_failed_claim(tmp_path):
    (tmp_path / "keep.txt").write_text("x")
    store = ResultStore(tmp_path)

    with pytest.raises(OutputConflict):
        store.write_model("params.json", ModelParams(n=3, b=0.5, alpha=2.0))

    assert sorted(p.name for p in tmp_path.iterdir()) == ["keep.txt"]


def test_ground_state_round_trip(tmp_path, gs_3d):
    store = ResultStore(tmp_path / "gs").claim()
    store.save_ground_state(gs_3d)

    back = load_ground_state(tmp_path / "gs" / GROUND_JSON)

    assert back.params == gs_3d.params
    assert back.mass_q == gs_3d.mass_q
    assert back.thresholds == gs_3d.thresholds
    assert np.array_equal(back.q.values, gs_3d.q.values)


def test_rows_leave_missing_cells_empty(tmp_path):
    store = ResultStore(tmp_path / "out")

    path = store.write_rows("fate_map.csv", ["id", "fate", "reason"], [{"id": "a", "fate": "Dispersed"}])

    assert path.read_text().splitlines() == ["id,fate,reason", "a,Dispersed,"]


def test_load_model_reports_the_bad_field(tmp_path):
    bad = tmp_path / "gs.json"
    bad.write_text('{"params": {"n": "three"}}')

    with pytest.raises(ConfigInvalid) as exc:
        load_model(bad, GroundStateSummary)

    assert str(bad) in str(exc.value)
    with pytest.raises(ConfigInvalid):
        load_model(tmp_path / "missing.json", GroundStateSummary)


def test_ground_state_is_also_written_as_csv(tmp_path, gs_3d):
    store = ResultStore(tmp_path / "gs").claim()
    store.save_ground_state(gs_3d)

    path = tmp_path / "gs" / GROUND_CSV
    header = path.read_text().splitlines()[0]
    table = np.loadtxt(path, delimiter=",", skiprows=1)

    assert header == "r,re,im"
    assert table.shape == (gs_3d.q.grid.dims[0], 3)
    assert np.array_equal(table[:, 0], mesh(gs_3d.q.grid)[0])
    assert np.array_equal(table[:, 1], gs_3d.q.values.real)
    assert not np.any(table[:, 2])


def test_cylindrical_csv_names_both_axes(tmp_path):
    grid = Grid(kind=GridKind.CYLINDRICAL, n=3, dims=(8, 8), extent=(4.0, 3.0))
    tau, z = mesh(grid)
    field = Field(grid=grid, values=np.exp(-(tau**2) - z**2) * np.exp(0.3j * z))

    path = ResultStore(tmp_path / "out").write_field_csv("final.csv", field)
    table = np.loadtxt(path, delimiter=",", skiprows=1)

    assert path.read_text().splitlines()[0] == "tau,z,re,im"
    assert table.shape == (64, 4)
    assert np.array_equal(table[:, 2] + 1j * table[:, 3], field.values.ravel())
