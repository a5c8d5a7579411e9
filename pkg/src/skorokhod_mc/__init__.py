"""Skorokhod embeddings of discrete martingales and supermartingales into Brownian motion."""

__version__ = "0.1.0"

from .brownian import BrownianPath, HorizonError, exit_batch, first_exit, gbm_transform
from .distributions import (
    DiscreteDistribution,
    ProcessSpec,
    from_preset,
    load_spec,
    make_distribution,
    spec_from_json,
    validate_spec,
)
from .dubins import DubinsEmbedder, EmbeddingResult, build_split_tree
from .supermartingale import SuperEmbedder, build_super_plan

__all__ = [
    "BrownianPath", "HorizonError", "exit_batch", "first_exit", "gbm_transform",
    "DiscreteDistribution", "ProcessSpec", "from_preset", "load_spec",
    "make_distribution", "spec_from_json", "validate_spec",
    "DubinsEmbedder", "EmbeddingResult", "build_split_tree",
    "SuperEmbedder", "build_super_plan",
]
