import argparse
from pathlib import Path

import structlog

from cli.output import key_value_table, stdout
from engine.cache.store import ResultStore
from engine.schemas import load_config
from engine.settings import LabSettings
from inls.groundstate import pohozaev_residuals, sharp_constants, solve_ground_state

logger = structlog.get_logger()


def register(sub: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    p = sub.add_parser("ground", parents=[common], help="Solve for Q and write gs.json, q.field and q.csv")
    p.add_argument("--config", type=Path, required=True, help="Experiment config (params + ground)")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: LabSettings) -> int:
    config = load_config(args.config)
    params = config.params.build()
    store = ResultStore(args.out or Path(config.outputs), force=args.force).claim()

    gs = solve_ground_state(params, config.ground.grid(params.n), config.ground.options(settings))
    store.save_ground_state(gs)

    residuals = pohozaev_residuals(gs)
    constants = sharp_constants(gs)
    stdout.print(
        key_value_table(
            f"Ground state  N={params.n}  b={params.b}  alpha={params.alpha}",
            [
                ("M(Q)", gs.mass_q),
                ("‖∇Q‖²", gs.grad_sq_q),
                ("P(Q)", gs.potential_q),
                ("E(Q)", gs.energy_q),
                ("E(Q)M(Q)^σc", gs.thresholds.e_m_sigma),
                ("‖∇Q‖‖Q‖^σc", gs.thresholds.grad_m_sigma),
                ("P(Q)M(Q)^σc", gs.thresholds.p_m_sigma),
                ("C_opt (quotient)", constants.c_opt),
                ("C_opt (closed form)", constants.c_opt_closed),
                ("Pohozaev r1", residuals.r1),
                ("Pohozaev r2", residuals.r2),
                ("residual", gs.residual),
                ("iterations", gs.iterations),
            ],
        )
    )
    logger.info("cli.ground.done", out=str(store.root), iterations=gs.iterations)
    return 0
