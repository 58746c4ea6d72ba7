"""Meta-VAE and its simplified variant (SMVAE).

Both share the block encoder: one small block per component (outer cylinder,
inner cylinder, d1, d2) and one for the condition, merged into the posterior
over ``z_meta``. They differ only in the decoder:

- Meta-VAE: a meta-decoder maps ``(z_meta, cond)`` to one latent code per
  component, and the frozen, pretrained marginal decoders turn those codes
  into point clouds.
- SMVAE: parallel blocks emit the components directly.
"""

import numpy as np

from metagen.core.autodiff import (
    LOGVAR_BOUNDS,
    MLP,
    Affine,
    Module,
    Tensor,
    clip,
    columns,
    concat,
    gaussian_kl,
    mse,
    reparameterize,
)
from metagen.core.autodiff.checkpoint import array_digest
from metagen.core.errors import ShapeMismatchError
from metagen.core.generators.base import Generator, VAEOutput, register, split_components
from metagen.core.generators.marginal import MarginalVAE, marginal_arch
from metagen.core.services.domain import COMPONENTS, N_POINTS, component_slices

COND_DIM = 3


class BlockEncoder(Module):
    def __init__(self, n_points: int, block: int, merge: int, latent: int, rng: np.random.Generator):
        self.slices = component_slices(n_points)
        self.blocks = {
            name: MLP([part.stop - part.start, block], rng, activate_last=True) for name, part in self.slices.items()
        }
        self.cond_block = MLP([COND_DIM, block], rng, activate_last=True)
        self.merge = MLP([block * (len(self.blocks) + 1), merge], rng, activate_last=True)
        self.mu_head = Affine(merge, latent, rng)
        self.logvar_head = Affine(merge, latent, rng)

    def __call__(self, system, cond) -> tuple[Tensor, Tensor]:
        system = system if isinstance(system, Tensor) else Tensor(system)
        features = [self.blocks[name](columns(system, part.start, part.stop)) for name, part in self.slices.items()]
        h = self.merge(concat([*features, self.cond_block(cond)]))
        return self.mu_head(h), clip(self.logvar_head(h), *LOGVAR_BOUNDS)


class _BlockVAE(Generator):
    """Common encode/forward/loss for the two block-structured models."""

    def _check_inputs(self, system, cond) -> None:
        system_shape = np.shape(system.data if isinstance(system, Tensor) else system)
        cond_shape = np.shape(cond)
        if len(system_shape) != 2 or system_shape[1] != self.system_size:  # noqa: PLR2004 - (batch, features)
            raise ShapeMismatchError(f"{self.kind} system", system_shape, (-1, self.system_size))
        if cond_shape != (system_shape[0], COND_DIM):
            raise ShapeMismatchError(f"{self.kind} cond", cond_shape, (system_shape[0], COND_DIM))

    def decode_components(self, z, cond) -> dict[str, Tensor]:
        raise NotImplementedError

    def decode(self, z, cond) -> Tensor:
        components = self.decode_components(z, cond)
        return concat([components[name] for name in COMPONENTS])

    def forward(self, system, cond, rng: np.random.Generator, *, deterministic: bool = False) -> VAEOutput:
        self._check_inputs(system, cond)
        mu, logvar = self.encoder(system, cond)
        z = mu if deterministic else reparameterize(mu, logvar, rng)
        return VAEOutput(self.decode_components(z, cond), mu, logvar)

    def loss(self, system, cond, rng: np.random.Generator) -> Tensor:
        out = self.forward(system, cond, rng)
        return meta_loss(out.recon, split_components(np.asarray(system), self.n_points), out.mu, out.logvar)


@register
class MetaVAE(_BlockVAE):
    kind = "meta-vae"
    default_arch = {
        "n_points": N_POINTS,
        "latent": 16,
        "block": 64,
        "merge": 128,
        "trunk": 128,
        "marginals": {name: marginal_arch(name) for name in COMPONENTS},
    }

    def __init__(
        self,
        arch: dict | None,
        rng: np.random.Generator,
        marginals: dict[str, MarginalVAE] | None = None,
    ):
        arch = dict(arch or {})
        if marginals is not None:
            missing = sorted(set(COMPONENTS) - set(marginals))
            if missing:
                msg = f"marginal models missing for {missing}"
                raise ValueError(msg)
            arch["marginals"] = {name: marginals[name].arch for name in COMPONENTS}
        super().__init__(arch)
        a = self.arch
        self.encoder = BlockEncoder(a["n_points"], a["block"], a["merge"], a["latent"], rng)
        self.trunk = MLP([a["latent"] + COND_DIM, a["trunk"], a["trunk"]], rng, activate_last=True)
        self.heads = {name: Affine(a["trunk"], a["marginals"][name]["latent"], rng) for name in COMPONENTS}
        self.marginal_decoders = {}
        for name in COMPONENTS:
            m = a["marginals"][name]
            decoder = MLP([m["latent"], m["hidden"], m["hidden"], m["n_in"]], rng)
            if marginals is not None:
                decoder.load_state_dict(marginals[name].decoder.state_dict())
            decoder.freeze()
            self.marginal_decoders[name] = decoder

    def meta_decode(self, z, cond) -> dict[str, Tensor]:
        """``(z_meta, cond)`` to the four marginal latent codes."""
        h = self.trunk(concat([z, cond]))
        return {name: head(h) for name, head in self.heads.items()}

    def decode_components(self, z, cond) -> dict[str, Tensor]:
        codes = self.meta_decode(z, cond)
        return {name: self.marginal_decoders[name](codes[name]) for name in COMPONENTS}

    def marginal_digest(self) -> str:
        state = {}
        for name, decoder in self.marginal_decoders.items():
            state.update({f"{name}.{key}": value for key, value in decoder.state_dict().items()})
        return array_digest(state)


@register
class SMVAE(_BlockVAE):
    kind = "smvae"
    default_arch = {"n_points": N_POINTS, "latent": 16, "block": 64, "merge": 128, "trunk": 128}

    def __init__(self, arch: dict | None, rng: np.random.Generator):
        super().__init__(arch)
        a = self.arch
        self.encoder = BlockEncoder(a["n_points"], a["block"], a["merge"], a["latent"], rng)
        self.trunk = MLP([a["latent"] + COND_DIM, a["trunk"]], rng, activate_last=True)
        self.component_blocks = {
            name: MLP([a["trunk"], a["block"], part.stop - part.start], rng) for name, part in self.slices.items()
        }

    def decode_components(self, z, cond) -> dict[str, Tensor]:
        h = self.trunk(concat([z, cond]))
        return {name: block(h) for name, block in self.component_blocks.items()}


def meta_forward(
    model: MetaVAE, system, cond, rng: np.random.Generator, *, deterministic: bool = False
) -> tuple[dict[str, Tensor], Tensor, Tensor]:
    out = model.forward(system, cond, rng, deterministic=deterministic)
    return out.recon, out.mu, out.logvar


def meta_loss(components: dict[str, Tensor], targets: dict[str, np.ndarray], mu: Tensor, logvar: Tensor) -> Tensor:
    """Sum of the per-component reconstruction MSEs plus the KL term."""
    if not components or set(components) != set(targets):
        raise ShapeMismatchError("meta_loss components", tuple(sorted(components)), tuple(sorted(targets)))
    reconstruction = [mse(components[name], targets[name]) for name in COMPONENTS if name in components]
    total = reconstruction[0]
    for term in reconstruction[1:]:
        total = total + term
    return total + gaussian_kl(mu, logvar)
