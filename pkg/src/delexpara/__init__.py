"""Delexicalized paraphrase generation for spoken-language skills."""
from .corpus import (AnnotatedUtterance, FormattedPair, SampleUtterance, SkillDefinition, SlotCatalog,
                     SlotValueBundle, Vocab, load_skills, reformat)
from .embedder import EmbeddingConfig
from .model import ModelConfig, PointerTransformer
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AnnotatedUtterance", "FormattedPair", "SampleUtterance", "SkillDefinition", "SlotCatalog",
    "SlotValueBundle", "Vocab", "load_skills", "reformat", "EmbeddingConfig", "ModelConfig",
    "PointerTransformer", "TrainConfig", "train",
]
