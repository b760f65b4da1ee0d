import argparse
import math
import sys
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import structlog
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from engine.queue.tasks import run_experiment
from engine.schemas import parse_config
from engine.telemetry.logger import setup_logging
from inls.classify import Theorem, chirped_scan, classify_at, runtime_criteria
from inls.errors import InlsError
from inls.evolve import EvolveControls, FateKind, conservation_drifts, run, virial_consistency
from inls.functionals import (
    CutoffKind,
    diagnostics,
    localized_virial,
    make_cutoff,
    weinstein_quotient,
)
from inls.grid import Grid, GridKind, radius
from inls.groundstate import (
    GroundState,
    coercivity_margin,
    pohozaev_residuals,
    sharp_constants,
    solve_ground_state,
)
from inls.model import ModelParams, sigma_weighted
from tools.initial_data import GaussianRecipe, RandomRecipe, build_initial

logger = structlog.get_logger()
console = Console()

TRIPLES = ((3, 0.5, 2.0), (2, 0.5, 3.0), (1, 0.5, 4.5))
POHOZAEV_TOL = 1e-6
GROUND_EXTENT = {1: 24.0, 2: 28.0, 3: 30.0}


@dataclass
class Check:
    name: str
    passed: bool
    measured: str
    target: str
    seconds: float = 0.0


def _radial(n: int, points: int = 4096, extent: float = 30.0) -> Grid:
    return Grid(kind=GridKind.RADIAL, n=n, dims=(points,), extent=(extent,))


class AcceptanceSuite:
    def __init__(self, skip_slow: bool) -> None:
        self.skip_slow = skip_slow
        self._ground: dict[tuple[int, float, float], GroundState] = {}

    def ground(self, triple: tuple[int, float, float]) -> GroundState:
        if triple not in self._ground:
            n, b, alpha = triple
            grid = _radial(n, extent=GROUND_EXTENT[n])
            self._ground[triple] = solve_ground_state(ModelParams(n=n, b=b, alpha=alpha), grid)
        return self._ground[triple]

    # --- Ground states ---

    def pohozaev(self) -> Check:
        residuals = {t: pohozaev_residuals(self.ground(t)) for t in TRIPLES}
        worst = {t: max(r.r1, r.r2) for t, r in residuals.items()}
        return Check(
            "Pohozaev identities",
            all(v <= POHOZAEV_TOL for t, v in worst.items()),
            ", ".join(f"N={t[0]}: {v:.1e}" for t, v in worst.items()),
            f"{POHOZAEV_TOL:.0e}",
        )

    def sech_oracle(self) -> Check:
        gs = solve_ground_state(ModelParams.validation(n=1, alpha=2.0), _radial(1))
        exact = math.sqrt(2.0) / np.cosh(radius(gs.q.grid))
        err = float(np.max(np.abs(gs.q.values.real - exact))) / math.sqrt(2.0)
        scalars = max(
            abs(gs.mass_q / 4.0 - 1.0),
            abs(gs.grad_sq_q / (4.0 / 3.0) - 1.0),
            abs(gs.potential_q / (16.0 / 3.0) - 1.0),
        )
        return Check("√2 sech oracle", max(err, scalars) <= 1e-6, f"{err:.1e} / {scalars:.1e}", "1e-06")

    def sharp_constants(self) -> Check:
        gaps = {}
        for t in TRIPLES:
            c = sharp_constants(self.ground(t))
            gaps[t] = max(abs(c.c_opt / c.c_opt_closed - 1.0), abs(c.energy_relations.r_threshold - 1.0))
        return Check(
            "Sharp constant and threshold",
            all(v <= POHOZAEV_TOL for t, v in gaps.items()),
            ", ".join(f"N={t[0]}: {v:.1e}" for t, v in gaps.items()),
            f"{POHOZAEV_TOL:.0e}",
        )

    def gn_property(self, samples: int = 200) -> Check:
        violations, worst = 0, 0.0
        rng_seed = 0
        for t in TRIPLES:
            gs = self.ground(t)
            grid = _radial(t[0], points=1024, extent=30.0)
            c_opt = sharp_constants(gs).c_opt
            for _ in range(samples):
                f = build_initial(RandomRecipe(terms=3), grid, seed=rng_seed)
                rng_seed += 1
                q = weinstein_quotient(f, gs.params) / c_opt
                worst = max(worst, q)
                violations += q > 1.0 + 1e-4
        return Check("GN inequality on random data", violations == 0, f"max ratio {worst:.6f}", "≤ 1 + 1e-4")

    def coercivity(self, samples: int = 100) -> Check:
        gs = self.ground(TRIPLES[0])
        p = gs.params
        level = 0.9 * gs.thresholds.p_m_sigma
        nu = coercivity_margin(gs, level).nu
        grid = gs.q.grid
        rng = np.random.default_rng(1)
        violations = 0
        for seed in range(samples):
            f = build_initial(RandomRecipe(terms=3), grid, seed=100 + seed)
            rec = diagnostics(f, p)
            # P·M^σc scales as a^{α+2+2σc}; land uniformly under the level
            target = level * rng.uniform(0.05, 1.0)
            a = (target / sigma_weighted(rec.potential, rec.mass, p.sigma_c)) ** (
                1.0 / (p.alpha + 2.0 + 2.0 * p.sigma_c)
            )
            scaled = diagnostics(f.with_values(a * f.values), p)
            violations += scaled.virial_g < nu * scaled.grad_sq - 1e-8
        return Check("Coercivity below 0.9·P(Q) level", violations == 0, f"ν = {nu:.4f}", "0 violations")

    # --- Evolution ---

    def conservation(self) -> Check:
        params = ModelParams(n=2, b=0.5, alpha=3.0)
        grid = Grid(kind=GridKind.CARTESIAN, n=2, dims=(256, 256), extent=(16.0, 16.0))
        u0 = build_initial(GaussianRecipe(amplitude=1.0), grid)
        drifts = []
        for dt in (2e-3, 1e-3):
            controls = EvolveControls(dt=dt, t_end=1.0, sample_every=10, adaptive=False)
            drifts.append(conservation_drifts(run(u0, params, controls).records))
        fine = drifts[1]
        order = drifts[0].energy / fine.energy if fine.energy > 0.0 else math.inf
        ok = fine.mass <= 1e-10 and fine.energy <= 1e-8 and 3.5 <= order <= 4.5
        return Check(
            "Mass, energy, dt²",
            ok,
            f"M {fine.mass:.1e}, E {fine.energy:.1e}, ratio {order:.2f}",
            "1e-10, 1e-8, [3.5, 4.5]",
        )

    def virial(self) -> Check:
        params = ModelParams(n=2, b=0.5, alpha=3.0)
        grid = Grid(kind=GridKind.CARTESIAN, n=2, dims=(256, 256), extent=(16.0, 16.0))
        u0 = build_initial(GaussianRecipe(amplitude=1.0, phase_lambda=0.1), grid)
        flowing = run(u0, params, EvolveControls(dt=1e-3, t_end=1.0, sample_every=10, adaptive=False))
        free = run(
            u0,
            params,
            EvolveControls(dt=1e-3, t_end=1.0, sample_every=10, adaptive=False, nonlinear=False),
        )
        full, linear = virial_consistency(flowing), virial_consistency(free)
        return Check(
            "Virial identity", full <= 1e-3 and linear <= 1e-5, f"{full:.1e} / {linear:.1e}", "1e-3 / 1e-5"
        )

    def soliton(self) -> Check:
        gs = self.ground(TRIPLES[0])
        controls = EvolveControls(dt=1e-3, t_end=5.0, sample_every=100, adaptive=False)
        traj = run(gs.q, gs.params, controls, reference=gs.q)
        dev = max(s.modulus_deviation for s in traj.reference)
        drifts = conservation_drifts(traj.records)
        branch = classify_at(traj.final_field, gs).theorem == Theorem.AT_THRESHOLD_2
        ok = (
            traj.fate.kind == FateKind.RAN_TO_END
            and dev <= 1e-4
            and max(drifts.mass, drifts.energy) <= 1e-8
            and branch
        )
        return Check(
            "Soliton stationarity",
            ok,
            f"{dev:.1e}, M {drifts.mass:.1e}, E {drifts.energy:.1e}",
            "1e-04, 1e-08, AtThreshold2",
        )

    def dichotomy(self) -> Check:
        mismatches = []
        for c in (0.5, 0.8, 0.95, 1.05, 1.2):
            outcome = run_experiment(
                parse_config(
                    {
                        "run_id": f"c{c}",
                        "params": {"n": 3, "b": 0.5, "alpha": 2.0},
                        "grid": {"kind": "radial", "dims": [4096], "extent": [30.0]},
                        "ground": {"points": 4096, "extent": 30.0},
                        "initial": {"preset": "ground_state_multiple", "c": c},
                        "controls": {"dt": 1e-3, "t_end": 3.0, "sample_every": 20, "adaptive": False},
                    }
                )
            )
            crit = runtime_criteria(outcome.trajectory, outcome.experiment.gs)
            fate = outcome.trajectory.fate.kind
            if c < 1.0:
                ok = (
                    outcome.verdict.theorem == Theorem.BELOW_GLOBAL
                    and fate != FateKind.BLOWUP_DETECTED
                    and crit.scatter_certified
                )
            else:
                ok = (
                    outcome.verdict.theorem == Theorem.BELOW_BLOWUP
                    and fate == FateKind.BLOWUP_DETECTED
                    and crit.blowup_certified
                )
            if not ok:
                mismatches.append(f"c={c}: {outcome.verdict.theorem.value}/{fate.value}")
        return Check("Below-threshold dichotomy", not mismatches, "; ".join(mismatches) or "5/5", "5/5")

    # --- Above threshold and cutoffs ---

    def lambda0(self) -> Check:
        gs = self.ground(TRIPLES[0])
        points = chirped_scan(gs, np.linspace(0.8, 1.2, 5), np.linspace(-0.5, 0.5, 5))
        bad = sum(not p.report.consistent for p in points)
        return Check("λ0 equivalence", bad == 0, f"{len(points) - bad}/{len(points)} consistent", "all")

    def defect_decay(self) -> Check:
        params = ModelParams(n=3, b=0.5, alpha=2.0)
        grid = _radial(3, points=4096, extent=60.0)
        u = build_initial(GaussianRecipe(amplitude=1.5, sigma=3.0, phase_lambda=0.05), grid)
        radii = np.array([4.0, 8.0, 16.0])
        defects = np.array(
            [
                abs(localized_virial(u, make_cutoff(grid, CutoffKind.RADIAL_QUADRATIC, r), params).remainder_bound)
                for r in radii
            ]
        )
        exponent = -np.polyfit(np.log(radii), np.log(defects), 1)[0]
        target = min(2.0, params.b) - 0.3
        monotone = bool(np.all(np.diff(defects) < 0.0))
        return Check("Localized virial defect", monotone and exponent >= target, f"{exponent:.2f}", f"≥ {target:.2f}")

    def checks(self) -> list[Callable[[], Check]]:
        fast = [self.sech_oracle, self.pohozaev, self.sharp_constants, self.gn_property,
                self.coercivity, self.lambda0, self.defect_decay]
        slow = [self.conservation, self.virial, self.soliton, self.dichotomy]
        return fast if self.skip_slow else fast + slow


def _render(results: list[Check]) -> Panel:
    table = Table(box=box.SIMPLE_HEAD, expand=True)
    table.add_column("Criterion", style="cyan")
    table.add_column("Measured", justify="right")
    table.add_column("Target", justify="right", style="dim")
    table.add_column("Time (s)", justify="right", style="dim")
    table.add_column("Status", justify="center")
    for r in results:
        status = Text("PASS", style="bold green") if r.passed else Text("FAIL", style="bold red")
        table.add_row(r.name, r.measured, r.target, f"{r.seconds:.1f}", status)
    passed = sum(r.passed for r in results)
    style = "green" if passed == len(results) else "red"
    return Panel(table, title=f"INLS acceptance // {passed}/{len(results)} passed", border_style=style)


def main() -> int:
    parser = argparse.ArgumentParser(description="Desk-scale acceptance checks with a rich summary.")
    parser.add_argument("--skip-slow", action="store_true", help="Skip the time-stepping checks")
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args()
    setup_logging(log_level=args.log_level)

    suite = AcceptanceSuite(skip_slow=args.skip_slow)
    results: list[Check] = []
    for check in suite.checks():
        name = check.__name__
        with console.status(f"[bold blue]{name}…"):
            start = time.perf_counter()
            try:
                result = check()
            except InlsError as e:
                result = Check(name, False, e.reason, "no error")
            result.seconds = time.perf_counter() - start
        logger.info("acceptance.check.done", check=name, passed=result.passed)
        results.append(result)

    console.print(_render(results))
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
