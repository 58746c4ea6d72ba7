"""Small reverse-mode autodiff engine over numpy, with the layers, losses and optimizer the generators need."""

from metagen.core.autodiff.layers import MLP, Affine, Module, frozen
from metagen.core.autodiff.losses import LOGVAR_BOUNDS, bce, gaussian_kl, mse, reparameterize
from metagen.core.autodiff.optim import Adam, AdamState, adam_step
from metagen.core.autodiff.tensor import (
    Tensor,
    add,
    affine,
    clip,
    columns,
    concat,
    exp,
    matmul,
    mean,
    mul,
    relu,
    scale,
    sub,
    tensor_sum,
)

__all__ = [
    "LOGVAR_BOUNDS",
    "MLP",
    "Adam",
    "AdamState",
    "Affine",
    "Module",
    "Tensor",
    "adam_step",
    "add",
    "affine",
    "bce",
    "clip",
    "columns",
    "concat",
    "exp",
    "frozen",
    "gaussian_kl",
    "matmul",
    "mean",
    "mul",
    "relu",
    "reparameterize",
    "scale",
    "sub",
    "tensor_sum",
]
