"""Certified cardinality-constrained GLMs by batched branch and bound.

Solves::

    min_b  sum_i l(x_i^T b, y_i) + lambda2 ||b||_2^2
    s.t.   ||b||_0 <= k,  ||b||_inf <= M

for the squared loss ``0.5 (s - y)^2`` and the logistic loss
``log(1 + exp(-y s))``, and optionally collects every support whose
restricted optimum lies within a factor ``1 + epsilon`` of the optimum.
"""

__version__ = "0.1.0"

from .engine import Certificate, ComponentProfile, SolverConfig, auto_batch_size, batch_size_sweep, solve
from .estimators import ColumnStandardizer, SparseGLMRegressor, SparseLogisticClassifier
from .losses import LossKind, loss_conjugate, loss_derivative, loss_value, smoothness_constant
from .nodes import NodeQueue, NodeState, assemble_batch, branch, root_node
from .partitioned import RowPartition, partition_rows, partitioned_batch_eval
from .problem import ProblemInstance, generate_synthetic, load_csv, preprocess, save_csv
from .prox import BatchMeta, batched_conjugate_prox, g_conjugate_value, g_value, prox_step
from .rashomon import (RashomonConfig, SupportTrie, collect_rashomon, model_reliance,
                       secondary_metrics, support_frequency, trie_insert, trie_recover)
from .relaxation import NumericalError, RelaxConfig, solve_batch_relaxation

__all__ = [
    "BatchMeta",
    "Certificate",
    "ColumnStandardizer",
    "ComponentProfile",
    "LossKind",
    "NodeQueue",
    "NodeState",
    "NumericalError",
    "ProblemInstance",
    "RashomonConfig",
    "RelaxConfig",
    "RowPartition",
    "SolverConfig",
    "SparseGLMRegressor",
    "SparseLogisticClassifier",
    "SupportTrie",
    "assemble_batch",
    "auto_batch_size",
    "batch_size_sweep",
    "batched_conjugate_prox",
    "branch",
    "collect_rashomon",
    "g_conjugate_value",
    "g_value",
    "generate_synthetic",
    "load_csv",
    "loss_conjugate",
    "loss_derivative",
    "loss_value",
    "model_reliance",
    "partition_rows",
    "partitioned_batch_eval",
    "preprocess",
    "prox_step",
    "root_node",
    "save_csv",
    "secondary_metrics",
    "smoothness_constant",
    "solve",
    "solve_batch_relaxation",
    "support_frequency",
    "trie_insert",
    "trie_recover",
]
