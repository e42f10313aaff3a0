"""Stem, stacked cells, global pooling and a linear classifier."""

from dataclasses import dataclass

import numpy as np

from ..autodiff import primitives as P
from ..autodiff.tensor import ShapeError
from .cell import CellSpec, DiscreteCell, SearchCell
from .layers import DEFAULT_ARCH_OPS, BatchNorm, Conv, FactorizedReduce, Linear, Module, ReLUConvBN, make_op


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class NetworkConfig:
    n_cells: int = 4
    init_channels: int = 16
    n_classes: int = 10
    reduction_positions: tuple = None
    n_nodes: int = 6
    in_channels: int = 3
    stem_multiplier: int = 3

    def __post_init__(self):
        if self.reduction_positions is None:
            self.reduction_positions = (self.n_cells // 2,)
        self.reduction_positions = tuple(sorted(set(self.reduction_positions)))
        if self.n_cells < 1:
            raise ValueError("n_cells must be at least 1")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        bad = [r for r in self.reduction_positions if not 0 <= r < self.n_cells]
        if bad:
            raise ValueError(f"reduction positions {bad} outside [0, {self.n_cells})")


def _check_finite(logits, where):
    if not np.all(np.isfinite(logits.data)):
        raise NonFiniteError(f"non-finite values in {where} (shape {logits.shape})")
    return logits


class _Backbone(Module):
    def _build(self, config, rng, make_cell):
        c = config.init_channels
        c_stem = config.stem_multiplier * c
        self.config = config
        self.stem = Conv(config.in_channels, c_stem, 3, rng, padding=1)
        self.stem_bn = BatchNorm(c_stem)
        c_prev2, c_prev, reduction_prev = c_stem, c_stem, False
        self.cells = []
        for k in range(config.n_cells):
            reduction = k in config.reduction_positions
            if reduction:
                c *= 2
            cell = make_cell(reduction, c_prev2, c_prev, c, reduction_prev)
            self.cells.append(cell)
            c_prev2, c_prev, reduction_prev = c_prev, cell.out_channels, reduction
        self.classifier = Linear(c_prev, config.n_classes, rng)

    def _head(self, s1):
        return self.classifier(P.global_avg_pool(s1))


class SearchNetwork(_Backbone):
    """Over-parameterized network; every stacked cell reads alpha from the shared spec
    of its kind (``specs[0]`` normal, ``specs[1]`` reduction)."""

    def __init__(self, config, rng, specs=None, op_set=DEFAULT_ARCH_OPS):
        if specs is None:
            specs = [CellSpec(config.n_nodes, op_set, False, rng=rng),
                     CellSpec(config.n_nodes, op_set, True, rng=rng)]
        self.specs = list(specs)
        normal, reduce = self.specs

        def make_cell(reduction, c_prev2, c_prev, c, reduction_prev):
            return SearchCell(reduce if reduction else normal, c_prev2, c_prev, c, reduction_prev, rng)

        self._build(config, rng, make_cell)

    def alphas(self):
        return [spec.alpha for spec in self.specs]

    def weights(self):
        return self.parameters()

    def forward(self, x):
        return network_forward(x, self)


def network_forward(x, net):
    if x.ndim != 4 or x.shape[1] != net.config.in_channels:
        raise ShapeError(f"network expects B x {net.config.in_channels} x H x W input, got {x.shape}")
    s0 = s1 = net.stem_bn(net.stem(x))
    for cell in net.cells:
        if isinstance(net, SearchNetwork):
            spec = net.specs[1] if cell.is_reduction else net.specs[0]
            out = cell.forward(s0, s1, spec)
        else:
            out = cell.forward(s0, s1)
        s0, s1 = s1, out
    return _check_finite(net._head(s1), "network logits")


class DiscreteCellModule(Module):
    def __init__(self, genotype_cell, c_prev2, c_prev, c, reduction_prev, rng):
        self.is_reduction = genotype_cell.is_reduction
        self.pre0 = FactorizedReduce(c_prev2, c, rng) if reduction_prev else ReLUConvBN(c_prev2, c, 1, rng)
        self.pre1 = ReLUConvBN(c_prev, c, 1, rng)
        self.nodes = genotype_cell.nodes
        self.node_ops = []
        for pairs in self.nodes:
            for op, src in pairs:
                stride = 2 if self.is_reduction and src < 2 else 1
                self.node_ops.append(make_op(op, c, stride, rng))
        self.out_channels = len(self.nodes) * c

    def forward(self, s0, s1):
        states = [self.pre0(s0), self.pre1(s1)]
        k = 0
        for pairs in self.nodes:
            node = None
            for _, src in pairs:
                y = self.node_ops[k](states[src])
                node = y if node is None else node + y
                k += 1
            states.append(node)
        return P.concat(states[2:], axis=1)


class DiscreteNetwork(_Backbone):
    """Network built from a genotype: ``[normal cell, reduction cell]``."""

    def __init__(self, config, genotype, rng):
        by_kind = {}
        for cell in genotype:
            by_kind.setdefault(cell.is_reduction, cell)
        needed = {k in config.reduction_positions for k in range(config.n_cells)}
        missing = needed - set(by_kind)
        if missing:
            kinds = ["reduction" if m else "normal" for m in sorted(missing)]
            raise ValueError(f"genotype has no {' or '.join(kinds)} cell")
        self.genotype = list(genotype)

        def make_cell(reduction, c_prev2, c_prev, c, reduction_prev):
            return DiscreteCellModule(by_kind[reduction], c_prev2, c_prev, c, reduction_prev, rng)

        self._build(config, rng, make_cell)

    def forward(self, x):
        return network_forward(x, self)


__all__ = ["DiscreteCell", "DiscreteNetwork", "NetworkConfig", "NonFiniteError", "SearchNetwork", "network_forward"]
