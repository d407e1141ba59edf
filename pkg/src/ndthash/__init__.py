"""Neural decision trees and sigmoid hashing heads.

A k-unit sigmoid head softly addresses 2^k regions ("chains"); soft
Gini / entropy / variance losses over those regions are differentiable,
so the head and any layers beneath it train by gradient descent.  The
same machinery drives greedy neural decision trees whose nodes are tiny
networks.
"""
from .chains import (MASS_EPS, RegionTable, build_region_table, chain_mass,
                     class_distribution, enumerate_chains, hard_assign, hard_memberships,
                     membership, membership_backward, memberships, region_mean)
from .data import (CONTINUOUS, NONE, ONE_HOT, Dataset, gen_blobs, gen_two_circles,
                   gen_two_moons, load_csv, one_hot, train_test_split, write_csv)
from .errors import (DataError, Diverged, InvalidArgument, LabelKindMismatch,
                     NDTHashError, UnsupportedWidth)
from .grad import (analytic_hashing_gradient, backprop_gradient, evaluate, gradcheck,
                   sgd_step)
from .hashing import (Predictor, fit_region_table, hash_codes, predict_with_confidence,
                      random_lsh_head)
from .losses import (LOSS_KINDS, LossSpec, composite_semisup_loss,
                     composite_unsupervised_loss, entropy, gini_impurity,
                     hashing_classification_loss, hashing_regression_loss, l2_penalty,
                     node_gini_loss, node_info_gain, node_variance_loss,
                     uniformity_regularizer, unsupervised_variance_loss)
from .net import (Autoencoder, DenseLayer, Network, Stack, identity_stack,
                  init_autoencoder, init_network)
from .train import TrainConfig, TrainHistory, train
from .tree import (NDTNode, NDTree, TreeConfig, global_fine_tune, global_loss,
                   grow_greedy, leaf_memberships, predict, tree_accuracy)

__all__ = ["Autoencoder", "TrainConfig", "TrainHistory", "train", "CONTINUOUS", "DataError", "Dataset", "DenseLayer",
           "Diverged", "InvalidArgument", "LOSS_KINDS", "LabelKindMismatch",
           "LossSpec", "MASS_EPS", "NDTHashError", "NDTNode", "NDTree", "NONE",
           "Network", "ONE_HOT", "Predictor", "RegionTable", "Stack", "TreeConfig",
           "UnsupportedWidth", "analytic_hashing_gradient", "backprop_gradient",
           "build_region_table", "chain_mass", "class_distribution",
           "composite_semisup_loss", "composite_unsupervised_loss", "entropy",
           "enumerate_chains", "evaluate", "fit_region_table", "gen_blobs",
           "gen_two_circles", "gen_two_moons", "gini_impurity", "global_fine_tune",
           "global_loss", "gradcheck", "grow_greedy", "hard_assign",
           "hard_memberships", "hash_codes", "hashing_classification_loss",
           "hashing_regression_loss", "identity_stack", "init_autoencoder",
           "init_network", "l2_penalty", "leaf_memberships", "load_csv", "membership",
           "membership_backward", "memberships", "node_gini_loss", "node_info_gain",
           "node_variance_loss", "one_hot", "predict", "predict_with_confidence",
           "random_lsh_head", "region_mean", "sgd_step", "train_test_split",
           "tree_accuracy", "uniformity_regularizer", "unsupervised_variance_loss",
           "write_csv"]

__version__ = "0.1.0"
