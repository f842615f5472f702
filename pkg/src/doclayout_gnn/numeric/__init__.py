from .optim import AdamState, ParamStore, adam_step, finite_diff_check
from .rng import Rng
from .tensor import NumericFailure, Tensor, backward, no_grad

__all__ = [
    "AdamState",
    "NumericFailure",
    "ParamStore",
    "Rng",
    "Tensor",
    "adam_step",
    "backward",
    "finite_diff_check",
    "no_grad",
]
