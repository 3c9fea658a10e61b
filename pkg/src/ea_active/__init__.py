"""Active learning for entity alignment between two knowledge graphs."""

from .kernels import BACKEND
from .kg import (
    AlignmentSet,
    KnowledgeGraph,
    KnowledgeGraphPair,
    SyntheticParams,
    generate_synthetic_pair,
    load_dataset,
    split_alignments,
)
from .model import ModelConfig
from .simulator import Dataset, SimulationConfig, run_simulation

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AlignmentSet",
    "Dataset",
    "KnowledgeGraph",
    "KnowledgeGraphPair",
    "ModelConfig",
    "SimulationConfig",
    "SyntheticParams",
    "generate_synthetic_pair",
    "load_dataset",
    "run_simulation",
    "split_alignments",
]
