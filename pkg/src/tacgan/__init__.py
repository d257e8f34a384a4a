"""Text-conditioned auxiliary-classifier GAN, desk scale.

A numpy implementation of a text-to-image GAN with an auxiliary per-class
discriminator head: dataset ingestion and triplet sampling, interchangeable
caption encoders, the generator/discriminator pair with hand-derived
gradients, alternating Adam training, latent/text interpolation sampling and
the two evaluation metrics (within-class multi-scale structural similarity
and an inception-style discriminability score).
"""

from .config import ModelConfig, RunConfig, default_config, desk_config, tiny_config
from .dataset import (
    Dataset,
    DatasetInstance,
    SyntheticSpec,
    TrainingTriplet,
    generate_synthetic_dataset,
    load_dataset,
    sample_triplet,
)
from .losses import (
    AuxiliaryTarget,
    LossBreakdown,
    loss_aux,
    loss_d_class,
    loss_d_source,
    loss_g,
)
from .network import (
    DiscriminatorOutput,
    NetworkParams,
    build_zc,
    discriminator_forward,
    generator_forward,
    init_params,
    project_text_g,
)
from .optim import OptimizerState, adam_update, init_optimizer
from .text import (
    HashingEncoder,
    TableEncoder,
    TextEmbedding,
    interpolate_embeddings,
    load_precomputed_table,
    make_encoder,
)
from .training import TripletBatch, collate_triplets, sample_batch, train_step

__version__ = "0.1.0"

__all__ = [
    "AuxiliaryTarget",
    "Dataset",
    "DatasetInstance",
    "DiscriminatorOutput",
    "HashingEncoder",
    "LossBreakdown",
    "ModelConfig",
    "NetworkParams",
    "OptimizerState",
    "RunConfig",
    "SyntheticSpec",
    "TableEncoder",
    "TextEmbedding",
    "TrainingTriplet",
    "TripletBatch",
    "adam_update",
    "build_zc",
    "collate_triplets",
    "default_config",
    "desk_config",
    "discriminator_forward",
    "generate_synthetic_dataset",
    "generator_forward",
    "init_optimizer",
    "init_params",
    "interpolate_embeddings",
    "load_dataset",
    "load_precomputed_table",
    "loss_aux",
    "loss_d_class",
    "loss_d_source",
    "loss_g",
    "make_encoder",
    "project_text_g",
    "sample_batch",
    "sample_triplet",
    "tiny_config",
    "train_step",
]
