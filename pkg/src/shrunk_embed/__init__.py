"""Local shrunk discriminant analysis, baseline reducers and evaluation tools."""
from .errors import *  # noqa: F401,F403
from .graph import AffinityGraph, NeighborSets, block_affinity, gaussian_affinity, knn_graph, knn_neighbors
from .matrices import EigPair, gen_eig_smallest, principal_angles, spd_solve, sym_eig
from .reducers import (
    GAMMA_INF,
    GAMMA_ZERO,
    LsdaParams,
    Projection,
    ShrunkEmbedding,
    lda_fit,
    local_lda_fit,
    lpp_fit,
    lsda_fit,
    pca_fit,
    transform,
)

__version__ = "0.1.0"
