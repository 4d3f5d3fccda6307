"""From-scratch DCGAN: dense-tensor layers, training, and the
discriminator-as-feature-extractor that produces image embeddings."""

from snapforge.gan.network import (
    GanConfig,
    DcganParams,
    init_params,
    generator_forward,
    discriminator_forward,
    load_params,
    save_params,
)
from snapforge.gan.loss import GanLossReport, gan_value
from snapforge.gan.train import Trainer, TrainingDiverged, train_model
from snapforge.gan.embed import (
    DcganEmbedder,
    Embedding,
    EmbeddingError,
    FileRegionDetector,
    PixelEmbedder,
    Region,
    WholeImageDetector,
    extract_embedding,
    preprocess,
)
from snapforge.gan.corpus import generate_corpus, list_corpus

__all__ = [
    "DcganEmbedder",
    "DcganParams",
    "Embedding",
    "EmbeddingError",
    "FileRegionDetector",
    "GanConfig",
    "GanLossReport",
    "PixelEmbedder",
    "Region",
    "Trainer",
    "TrainingDiverged",
    "WholeImageDetector",
    "discriminator_forward",
    "extract_embedding",
    "gan_value",
    "generate_corpus",
    "generator_forward",
    "init_params",
    "list_corpus",
    "load_params",
    "preprocess",
    "save_params",
    "train_model",
]
