"""Numerical core: graphs, block models, spectral embeddings, mixtures and their analysis"""

from .graph import Graph, VertexLabels, load_edge_list, load_labels, largest_connected_component
from .sbm import SbmParams, sample_sbm, fit_block_model, collapse_blocks, classify_structure, eda_point, load_fixture
from .spectral import EmbeddingMethod, SolverOptions, top_eigenpairs, embed
from .gmm import GmmOptions, GmmModel
from .model_selection import profile_likelihood_d, select_k_bic
from .chernoff import Gaussian, chernoff_information, chernoff_ratio, mixture_kl, two_truths_grouping
from .evaluation import Partition, ari, permutation_test_ari, delta_ari

__all__ = [
    'Graph',
    'VertexLabels',
    'load_edge_list',
    'load_labels',
    'largest_connected_component',
    'SbmParams',
    'sample_sbm',
    'fit_block_model',
    'collapse_blocks',
    'classify_structure',
    'eda_point',
    'load_fixture',
    'EmbeddingMethod',
    'SolverOptions',
    'top_eigenpairs',
    'embed',
    'GmmOptions',
    'GmmModel',
    'profile_likelihood_d',
    'select_k_bic',
    'Gaussian',
    'chernoff_information',
    'chernoff_ratio',
    'mixture_kl',
    'two_truths_grouping',
    'Partition',
    'ari',
    'permutation_test_ari',
    'delta_ari',
]
