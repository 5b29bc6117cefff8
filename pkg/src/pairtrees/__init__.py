"""Network inference as classification of node pairs with extremely
randomized tree ensembles (global and local approaches)."""
from .evaluation import EvalReport, make_folds, run_experiment, write_report
from .errors import UnsupportedError, ValidationError
from .extra_trees import EnsembleModel, ForestConfig, fit_ensemble, feature_importances
from .graph_data import (
    Family,
    FeatureTable,
    NodeUniverse,
    PairSample,
    partition_families,
    synth_block_network,
    synth_preferential_network,
)
from .global_model import GlobalModel, fit_global
from .local_model import LocalModel, fit_local, fit_second_step

__version__ = "0.1.0"
