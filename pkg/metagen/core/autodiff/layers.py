"""Parameter containers: Module, Affine and MLP."""

from collections.abc import Iterator
from contextlib import contextmanager

import numpy as np

from metagen.core.autodiff.tensor import Tensor, affine, relu
from metagen.core.errors import CheckpointError, NonFiniteError, ShapeMismatchError


class Module:
    """Anything holding parameters.

    Parameters are the Tensor attributes of a module and of its sub-modules
    (attributes, lists or dicts of modules), named by their attribute path in
    definition order. Names are the checkpoint keys, so renaming an attribute
    breaks old checkpoints.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, list | tuple):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
            elif isinstance(value, dict):
                for key, item in value.items():
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{key}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {name: p for name, p in self.named_parameters() if p.requires_grad}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        if missing:
            raise CheckpointError("<state>", f"missing parameters: {', '.join(missing)}")
        for name, p in own.items():
            data = np.asarray(state[name], dtype=np.float64)
            if data.shape != p.shape:
                raise ShapeMismatchError(f"load {name}", data.shape, p.shape)
            if not np.isfinite(data).all():
                raise NonFiniteError(f"parameter {name}")
            p.data = data.copy()


@contextmanager
def frozen(module: Module):
    """Temporarily stop gradients into ``module``'s parameters; inputs still receive gradients."""
    flags = [(p, p.requires_grad, p.grad) for p in module.parameters()]
    for p, _, _ in flags:
        p.requires_grad = False
    try:
        yield module
    finally:
        for p, requires_grad, grad in flags:
            p.requires_grad = requires_grad
            p.grad = grad


class Affine(Module):
    """Fully connected layer, weight ``[out × in]`` ~ U[-1/sqrt(in), 1/sqrt(in)], zero bias."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(n_out, n_in)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return affine(x, self.weight, self.bias)

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


class MLP(Module):
    """Stack of Affine layers with ReLU between them (and after the last one if asked)."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, *, activate_last: bool = False):
        self.layers = [Affine(n_in, n_out, rng) for n_in, n_out in zip(sizes[:-1], sizes[1:], strict=True)]
        self.activate_last = activate_last

    def __call__(self, x) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if self.activate_last or i < len(self.layers) - 1:
                x = relu(x)
        return x
