"""Adaptive filter sets learned from whitened patches, for quality and texture tasks.

Modules: ``imageio`` (I/O and patches), ``whitening`` (iterated ZCA),
``decoder`` (sparse linear decoder), ``metrics``, ``iqa`` (UNIQUE and
MS-UNIQUE), ``texture`` (hierarchical retrieval), ``synthdata`` (desk
corpora), ``modelfile`` (serialization) and ``cli``.
"""

from . import decoder, imageio, iqa, metrics, modelfile, synthdata, texture, whitening
from .decoder import FilterSet, TrainingConfig
from .iqa import MsUniqueModel, UniqueModel
from .texture import RetrievalIndex, TextureModel
from .whitening import WhiteningChain, WhiteningTransform, iterated_whiten

__version__ = "0.1.0"

__all__ = [
    "decoder", "imageio", "iqa", "metrics", "modelfile", "synthdata", "texture", "whitening",
    "FilterSet", "TrainingConfig", "UniqueModel", "MsUniqueModel", "TextureModel",
    "RetrievalIndex", "WhiteningChain", "WhiteningTransform", "iterated_whiten",
]
