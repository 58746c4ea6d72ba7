"""Baselines trained on whole systems: a conditional VAE and a conditional GAN.

Both see the flattened 360-value system (cylinders and densities concatenated)
with the condition appended; neither knows about components.
"""

from dataclasses import dataclass

import numpy as np

from metagen.core.autodiff import (
    LOGVAR_BOUNDS,
    MLP,
    Adam,
    Affine,
    Tensor,
    bce,
    clip,
    concat,
    frozen,
    gaussian_kl,
    mse,
    reparameterize,
)
from metagen.core.errors import NonFiniteError, ShapeMismatchError
from metagen.core.generators.base import Generator, VAEOutput, register
from metagen.core.services.domain import N_POINTS

COND_DIM = 3


@register
class VanillaCVAE(Generator):
    kind = "vanilla-vae"
    default_arch = {"n_points": N_POINTS, "latent": 16, "hidden": 256}

    def __init__(self, arch: dict | None, rng: np.random.Generator):
        super().__init__(arch)
        hidden, latent = self.arch["hidden"], self.arch["latent"]
        self.encoder = MLP([self.system_size + COND_DIM, hidden, hidden], rng, activate_last=True)
        self.mu_head = Affine(hidden, latent, rng)
        self.logvar_head = Affine(hidden, latent, rng)
        self.decoder = MLP([latent + COND_DIM, hidden, hidden, self.system_size], rng)

    def decode(self, z, cond) -> Tensor:
        return self.decoder(concat([z, cond]))

    def forward(self, system, cond, rng: np.random.Generator, *, deterministic: bool = False) -> VAEOutput:
        if np.shape(system)[-1] != self.system_size or np.shape(cond) != (np.shape(system)[0], COND_DIM):
            raise ShapeMismatchError(f"{self.kind} inputs", np.shape(system), np.shape(cond))
        h = self.encoder(concat([system, cond]))
        mu, logvar = self.mu_head(h), clip(self.logvar_head(h), *LOGVAR_BOUNDS)
        z = mu if deterministic else reparameterize(mu, logvar, rng)
        return VAEOutput({"system": self.decode(z, cond)}, mu, logvar)

    def loss(self, system, cond, rng: np.random.Generator) -> Tensor:
        out = self.forward(system, cond, rng)
        return mse(out.recon["system"], system) + gaussian_kl(out.mu, out.logvar)


@register
class VanillaCGAN(Generator):
    kind = "vanilla-gan"
    default_arch = {"n_points": N_POINTS, "latent": 16, "hidden": 256}

    def __init__(self, arch: dict | None, rng: np.random.Generator):
        super().__init__(arch)
        hidden, latent = self.arch["hidden"], self.arch["latent"]
        self.generator = MLP([latent + COND_DIM, hidden, hidden, self.system_size], rng)
        self.discriminator = MLP([self.system_size + COND_DIM, hidden, hidden, 1], rng)

    def decode(self, z, cond) -> Tensor:
        return self.generator(concat([z, cond]))

    def critic(self, system, cond) -> Tensor:
        return self.discriminator(concat([system, cond]))


@dataclass(frozen=True, slots=True)
class GanStepLosses:
    g_loss: float
    d_loss: float


class GanOptimizers:
    """One Adam per network; the discriminator's never sees generator parameters and vice versa."""

    def __init__(self, gan: VanillaCGAN, **settings):
        self.generator = Adam(gan.generator.trainable_parameters(), **settings)
        self.discriminator = Adam(gan.discriminator.trainable_parameters(), **settings)


def cgan_step(
    gan: VanillaCGAN,
    optimizers: GanOptimizers,
    system: np.ndarray,
    cond: np.ndarray,
    rng: np.random.Generator,
) -> GanStepLosses:
    """One discriminator update on real and fake, then one non-saturating generator update."""
    z = rng.standard_normal((len(system), gan.latent_dim))
    fake = gan.decode(z, cond)

    optimizers.discriminator.zero_grad()
    d_loss = bce(gan.critic(system, cond), 1.0) + bce(gan.critic(fake.detach(), cond), 0.0)
    if not np.isfinite(d_loss.data):
        raise NonFiniteError("discriminator loss")
    d_loss.backward()
    optimizers.discriminator.step()

    optimizers.generator.zero_grad()
    with frozen(gan.discriminator):
        g_loss = bce(gan.critic(fake, cond), 1.0)
        if not np.isfinite(g_loss.data):
            raise NonFiniteError("generator loss")
        g_loss.backward()
    optimizers.generator.step()
    return GanStepLosses(g_loss=g_loss.item(), d_loss=d_loss.item())
