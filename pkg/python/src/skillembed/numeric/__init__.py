from .autodiff import Node, ParamVector, Tape
from .mlp import Activation, MlpSpec, OutputHead, init_params, mlp_eval, mlp_forward
from .optim import OptimizerKind, OptimizerState, optimizer_step

__all__ = [
    "Activation",
    "MlpSpec",
    "Node",
    "OptimizerKind",
    "OptimizerState",
    "OutputHead",
    "ParamVector",
    "Tape",
    "init_params",
    "mlp_eval",
    "mlp_forward",
    "optimizer_step",
]
