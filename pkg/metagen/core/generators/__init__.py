"""Generator architectures. Importing this package registers every kind."""

from metagen.core.generators.base import (
    Generator,
    VAEOutput,
    generator_class,
    load_generator,
    registered_kinds,
    sample_system,
    sample_systems,
    split_components,
)
from metagen.core.generators.marginal import MarginalKind, MarginalVAE, marginal_forward, marginal_loss
from metagen.core.generators.meta_vae import SMVAE, MetaVAE, meta_forward, meta_loss
from metagen.core.generators.vanilla import GanOptimizers, GanStepLosses, VanillaCGAN, VanillaCVAE, cgan_step

# System-level models, in report order.
MODEL_KINDS = (MetaVAE.kind, SMVAE.kind, VanillaCVAE.kind, VanillaCGAN.kind)

__all__ = [
    "MODEL_KINDS",
    "SMVAE",
    "GanOptimizers",
    "GanStepLosses",
    "Generator",
    "MarginalKind",
    "MarginalVAE",
    "MetaVAE",
    "VAEOutput",
    "VanillaCGAN",
    "VanillaCVAE",
    "cgan_step",
    "generator_class",
    "load_generator",
    "marginal_forward",
    "marginal_loss",
    "meta_forward",
    "meta_loss",
    "registered_kinds",
    "sample_system",
    "sample_systems",
    "split_components",
]
