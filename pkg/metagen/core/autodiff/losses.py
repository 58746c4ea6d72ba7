"""Losses and the Gaussian reparameterization used by the VAE and GAN models.

Reductions are fixed here: MSE averages over every element (batch included),
the KL term sums over latent dimensions and averages over the batch, and the
binary cross-entropy averages over every logit.
"""

import numpy as np

from metagen.core.autodiff.tensor import Tensor, accumulate_grad, add, as_tensor, exp, mul, scale
from metagen.core.errors import NonFiniteError, ShapeMismatchError

LOGVAR_BOUNDS = (-10.0, 10.0)


def mse(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError("mse", pred.shape, target.shape)
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        accumulate_grad(pred, g * 2.0 * diff / n)
        accumulate_grad(target, -g * 2.0 * diff / n)

    return Tensor.from_op(np.array(np.mean(diff * diff)), (pred, target), "mse", backward)


def gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)): summed over latent dims, averaged over rows."""
    if mu.shape != logvar.shape:
        raise ShapeMismatchError("gaussian_kl", mu.shape, logvar.shape)
    if not (np.isfinite(mu.data).all() and np.isfinite(logvar.data).all()):
        raise NonFiniteError("gaussian_kl inputs")
    batch = mu.shape[0] if mu.data.ndim > 1 else 1
    var = np.exp(logvar.data)
    value = 0.5 * np.sum(mu.data**2 + var - 1.0 - logvar.data) / batch

    def backward(g):
        accumulate_grad(mu, g * mu.data / batch)
        accumulate_grad(logvar, g * 0.5 * (var - 1.0) / batch)

    return Tensor.from_op(np.array(value), (mu, logvar), "gaussian_kl", backward)


def bce(logit: Tensor, label) -> Tensor:
    """Binary cross-entropy on logits, ``softplus(z) - y*z``, computed without overflow."""
    label = np.broadcast_to(np.asarray(label, dtype=np.float64), logit.shape)
    n = logit.data.size
    value = np.mean(np.logaddexp(0.0, logit.data) - label * logit.data)

    def backward(g):
        sigmoid = 0.5 * (1.0 + np.tanh(0.5 * logit.data))
        accumulate_grad(logit, g * (sigmoid - label) / n)

    return Tensor.from_op(np.array(value), (logit,), "bce", backward)


def reparameterize(mu: Tensor, logvar: Tensor, rng: np.random.Generator) -> Tensor:
    """``mu + exp(0.5*logvar) * eps`` with ``eps ~ N(0, I)`` held constant."""
    if mu.shape != logvar.shape:
        raise ShapeMismatchError("reparameterize", mu.shape, logvar.shape)
    eps = rng.standard_normal(mu.shape)
    return add(mu, mul(exp(scale(logvar, 0.5)), eps))
