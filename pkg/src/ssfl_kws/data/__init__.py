"""Datasets, the binary file format, synthetic data and client partitioners."""

from .dataset import UNLABELED, Dataset, Example, split_labeled, split_labeled_indices, train_test_split
from .io import load_dataset, save_dataset
from .partition import (
    PartitionPlan,
    Scheme,
    build_plan,
    partition,
    partition_dirichlet,
    partition_iid,
    partition_label_skew,
)
from .synthetic import class_templates, gen_synthetic

__all__ = [
    "UNLABELED",
    "Dataset",
    "Example",
    "PartitionPlan",
    "Scheme",
    "build_plan",
    "class_templates",
    "gen_synthetic",
    "load_dataset",
    "partition",
    "partition_dirichlet",
    "partition_iid",
    "partition_label_skew",
    "save_dataset",
    "split_labeled",
    "split_labeled_indices",
    "train_test_split",
]
