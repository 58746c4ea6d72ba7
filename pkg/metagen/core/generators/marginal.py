"""Marginal VAEs: one unconditional VAE per unitary component.

Their decoders become the marginal generators of the Meta-VAE. A cylinder is two
circles (``4n`` coordinates), a density one (``2n``).
"""

from enum import StrEnum

import numpy as np

from metagen.core.autodiff import LOGVAR_BOUNDS, MLP, Affine, Tensor, clip, gaussian_kl, mse, reparameterize
from metagen.core.errors import ShapeMismatchError
from metagen.core.generators.base import Generator, VAEOutput, register
from metagen.core.services.domain import N_POINTS


class MarginalKind(StrEnum):
    CYLINDER = "cylinder"
    DENSITY = "density"


# Which marginal each component is generated by.
COMPONENT_KINDS = {
    "outer_cyl": MarginalKind.CYLINDER,
    "inner_cyl": MarginalKind.CYLINDER,
    "density1": MarginalKind.DENSITY,
    "density2": MarginalKind.DENSITY,
}

KIND_DEFAULTS = {
    MarginalKind.CYLINDER: {"latent": 8, "hidden": 128},
    MarginalKind.DENSITY: {"latent": 4, "hidden": 64},
}


def marginal_arch(component: str, n_points: int = N_POINTS, **overrides) -> dict:
    kind = COMPONENT_KINDS[component]
    circles = 2 if kind == MarginalKind.CYLINDER else 1
    return {
        "component": component,
        "n_points": n_points,
        "n_in": circles * n_points * 2,
        **KIND_DEFAULTS[kind],
        **overrides,
    }


@register
class MarginalVAE(Generator):
    kind = "marginal"
    default_arch = {"component": "outer_cyl", "n_points": N_POINTS, "n_in": 120, "latent": 8, "hidden": 128}

    def __init__(self, arch: dict | None, rng: np.random.Generator):
        super().__init__(arch)
        n_in, hidden, latent = self.arch["n_in"], self.arch["hidden"], self.arch["latent"]
        self.encoder = MLP([n_in, hidden, hidden], rng, activate_last=True)
        self.mu_head = Affine(hidden, latent, rng)
        self.logvar_head = Affine(hidden, latent, rng)
        self.decoder = MLP([latent, hidden, hidden, n_in], rng)

    @classmethod
    def for_component(cls, component: str, rng: np.random.Generator, n_points: int = N_POINTS, **overrides):
        return cls(marginal_arch(component, n_points, **overrides), rng)

    @property
    def component(self) -> str:
        return self.arch["component"]

    @property
    def component_kind(self) -> MarginalKind:
        return COMPONENT_KINDS[self.component]

    @property
    def system_size(self) -> int:
        return self.arch["n_in"]

    def encode(self, x) -> tuple[Tensor, Tensor]:
        h = self.encoder(x)
        return self.mu_head(h), clip(self.logvar_head(h), *LOGVAR_BOUNDS)

    def decode(self, z, cond=None) -> Tensor:
        return self.decoder(z)

    def forward(self, x, rng: np.random.Generator, *, deterministic: bool = False) -> VAEOutput:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.arch["n_in"]:  # noqa: PLR2004 - (batch, features)
            raise ShapeMismatchError(f"marginal_forward[{self.component}]", x.shape, (-1, self.arch["n_in"]))
        mu, logvar = self.encode(x)
        z = mu if deterministic else reparameterize(mu, logvar, rng)
        return VAEOutput({self.component: self.decode(z)}, mu, logvar)

    def loss(self, x, cond, rng: np.random.Generator) -> Tensor:
        return marginal_loss(self.forward(x, rng), x)


def marginal_forward(model: MarginalVAE, x, rng: np.random.Generator) -> tuple[Tensor, Tensor, Tensor]:
    out = model.forward(x, rng)
    return out.recon[model.component], out.mu, out.logvar


def marginal_loss(out: VAEOutput, target) -> Tensor:
    (recon,) = out.recon.values()
    return mse(recon, target) + gaussian_kl(out.mu, out.logvar)
