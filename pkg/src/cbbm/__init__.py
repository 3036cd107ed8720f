"""Monte Carlo lab for the complex branching Brownian motion energy model."""

from .bbm import BbmForest, Cloud, leaf_barrier_flags, path_barrier_event, positions_at, sample_positions
from .gw import BINARY, GwTree, HorizonTooLarge, OffspringLaw, overlap, sample_tree
from .observables import (
    Beta,
    ComplexExpSum,
    constrained_partition,
    derivative_martingale,
    mckean_martingale,
    normalized_partition,
    partition_function,
    seneta_heyde,
)
from .phase import PhaseLabel, classify, clt_scaling, limiting_log_partition
from .rng import substream

__version__ = "0.1.0"
