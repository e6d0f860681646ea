from . import ops
from .gradcheck import GradCheckReport, grad_check
from .optim import Adam, EarlyStopper, PlateauSchedule, StepDecaySchedule
from .tensor import (
    Tensor,
    as_tensor,
    collect_parameters,
    default_dtype,
    parameter,
    set_default_dtype,
)
from .tensorio import load_checkpoint, read_tensor, save_checkpoint, write_tensor

__all__ = [
    "Adam",
    "EarlyStopper",
    "GradCheckReport",
    "PlateauSchedule",
    "StepDecaySchedule",
    "Tensor",
    "as_tensor",
    "collect_parameters",
    "default_dtype",
    "grad_check",
    "load_checkpoint",
    "ops",
    "parameter",
    "read_tensor",
    "save_checkpoint",
    "set_default_dtype",
    "write_tensor",
]
