import pytest

from engine.schemas import parse_config
from engine.queue.tasks import run_experiment
from inls.classify import PredictedFate, Theorem, runtime_criteria
from inls.evolve import FateKind


def _c_scan_config(c: float) -> dict:
    return {
        "run_id": f"c{c}",
        "params": {"n": 3, "b": 0.5, "alpha": 2.0},
        "grid": {"kind": "radial", "dims": [2048], "extent": [30.0]},
        "initial": {"preset": "ground_state_multiple", "c": c},
        "controls": {
            "dt": 1e-3,
            "t_end": 3.0,
            "sample_every": 20,
            "blowup_grad_factor": 25.0,
            "adaptive": False,
        },
    }


@pytest.mark.slow
def test_supercritical_multiple_collapses():
    """1.2·Q: predicted blow-up, and the gradient grows past the detector."""
    outcome = run_experiment(parse_config(_c_scan_config(1.2)))

    assert outcome.verdict.theorem == Theorem.BELOW_BLOWUP
    assert outcome.verdict.predicted_fate == PredictedFate.BLOWUP
    assert outcome.trajectory.fate.kind == FateKind.BLOWUP_DETECTED
    crit = runtime_criteria(outcome.trajectory, outcome.experiment.gs)
    assert crit.blowup_certified


@pytest.mark.slow
def test_subcritical_multiple_stays_bounded():
    """0.8·Q: predicted global, and the gradient never reaches the detector."""
    outcome = run_experiment(parse_config(_c_scan_config(0.8)))

    assert outcome.verdict.theorem == Theorem.BELOW_GLOBAL
    assert outcome.trajectory.fate.kind != FateKind.BLOWUP_DETECTED
    crit = runtime_criteria(outcome.trajectory, outcome.experiment.gs)
    assert crit.scatter_certified
