from .closed_loop import ClosedLoopResult, DisturbanceSpec, closed_loop, step_reference
from .controller import (
    Controller,
    EsnModel,
    MpcConfig,
    MpcState,
    PlantModel,
    StepInfo,
    build_qp,
    free_response,
    free_rollout,
    mpc_step,
    sensitivity_matrix,
    update_filter,
)
from .qp import QpProblem, QpSolution, kkt_residuals, solve_qp

__all__ = [
    "ClosedLoopResult", "DisturbanceSpec", "closed_loop", "step_reference",
    "Controller", "EsnModel", "MpcConfig", "MpcState", "PlantModel", "StepInfo", "build_qp", "free_response", "free_rollout",
    "mpc_step", "sensitivity_matrix", "update_filter",
    "QpProblem", "QpSolution", "kkt_residuals", "solve_qp",
]
