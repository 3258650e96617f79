"""Multimodal ranking with end-to-end trained content encoders and a cached embedding bank."""

from .config import RunConfig, load_config
from .data import Corpus, SyntheticConfig, generate_corpus

__all__ = ["RunConfig", "load_config", "Corpus", "SyntheticConfig", "generate_corpus"]
__version__ = "0.1.0"
