"""Mutual and symmetric k-nearest-neighbor methods and their Bayesian
(graph-Laplacian Gaussian process) versions with evidence-based choice of k.
"""

__version__ = "0.1.0"

from .dataset import (DataError, FoldPlan, LabeledDataset, encode_binary, encode_onehot,
                      gen_sinc3c_test, gen_sinc3c_train, load_csv, make_folds, sinc, standardize)
from .neighbors import (NeighborGraph, NeighborIndex, WeightedGraph, build_neighbor_graph,
                        build_weighted_graph, in_nprime, knn_list, mutual_set)
from .classic import knn_classify, mknn_classify, mknn_regress, sknn_classify, sknn_regress
from .gp import (Hyperparams, NumericalError, PrecisionModel, bayes_regress, build_cmul,
                 build_precision, check_spd, evidence_gradient, log_evidence_binary,
                 log_evidence_mul1, log_evidence_mul2, optimize_hyperparams)
from .classify import (ClassifierSpec, classic_with_bayes_k, classify_binary, classify_mul1,
                       classify_mul2, predict)
from .evaluation import CVResult, error_rate, loocv_error, run_cv, select_k_loocv
