"""Dense/sparse kernels, gradient tape and Adam."""
from .container import load_tensors, save_tensors
from .mlp import init_mlp2, mlp2_forward
from .optim import AdamState, NumericalError, adam_step
from .sparse import CsrMatrix, spmm, symmetric_normalize
from .tape import ShapeError, Tape, Tensor, value_of

__all__ = [
    "AdamState",
    "CsrMatrix",
    "NumericalError",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "init_mlp2",
    "load_tensors",
    "mlp2_forward",
    "save_tensors",
    "spmm",
    "symmetric_normalize",
    "value_of",
]
