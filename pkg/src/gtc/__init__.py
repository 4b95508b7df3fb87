"""Self-supervised heterogeneous graph embeddings via two contrasted views."""

import os as _os

# cap BLAS/OpenMP pools before numpy spins them up; GTC_THREADS defaults to 1
_threads = _os.environ.get("GTC_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    _os.environ.setdefault(_var, _threads)

from .errors import ConfigError, DataError, GtcError, NumericError, ShapeError
from .sparse import SparseMatrix
from .graph import (ContrastiveSets, HeteroGraph, Metapath, Relation,
                    compose_metapath_adjacency, mine_contrastive_sets, normalize_sym)
from .tokens import TokenSequenceSet, batch_tokens, build_token_set, build_tokens
from .datasets import (SyntheticConfig, export_embeddings, generate_synthetic,
                       load_dataset, load_embeddings, save_dataset)
from .checkpoint import load_params, save_params
from .training import GtcModel, TrainConfig, TrainReport, fit, grid_search, train
from .evaluation import (MetricsReport, Split, SplitSpec, cluster_eval,
                         evaluate_embeddings, make_split, oversmoothing_sweep)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "GtcError", "NumericError", "ShapeError",
    "SparseMatrix", "ContrastiveSets", "HeteroGraph", "Metapath", "Relation",
    "compose_metapath_adjacency", "mine_contrastive_sets", "normalize_sym",
    "TokenSequenceSet", "batch_tokens", "build_token_set", "build_tokens",
    "SyntheticConfig", "export_embeddings", "generate_synthetic",
    "load_dataset", "load_embeddings", "save_dataset",
    "load_params", "save_params",
    "GtcModel", "TrainConfig", "TrainReport", "fit", "grid_search", "train",
    "MetricsReport", "Split", "SplitSpec", "cluster_eval", "evaluate_embeddings",
    "make_split", "oversmoothing_sweep",
    "__version__",
]
