"""Differentiable cell search space and the networks built from it."""

from .cell import (
    CellSpec,
    DiscreteCell,
    GenotypeError,
    SearchCell,
    alpha_snapshot,
    cell_edges,
    cell_forward,
    discretize,
    discretize_cell,
    enumerate_search_space,
    genotype_parse,
    genotype_serialize,
    mixed_op_forward,
    search_space_size,
)
from .layers import DEFAULT_ARCH_OPS, FULL_ARCH_OPS, OP_FACTORIES, Module, make_op
from .network import DiscreteNetwork, NetworkConfig, NonFiniteError, SearchNetwork, network_forward

__all__ = [
    "CellSpec", "DEFAULT_ARCH_OPS", "DiscreteCell", "DiscreteNetwork", "FULL_ARCH_OPS", "GenotypeError",
    "Module", "NetworkConfig", "NonFiniteError", "OP_FACTORIES", "SearchCell", "SearchNetwork",
    "alpha_snapshot", "cell_edges", "cell_forward", "discretize", "discretize_cell",
    "enumerate_search_space", "genotype_parse", "genotype_serialize", "make_op", "mixed_op_forward",
    "network_forward", "search_space_size",
]
