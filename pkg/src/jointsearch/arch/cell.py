"""Mixed-operation DAG cells, discretization and genotype text format."""

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import primitives as P
from ..autodiff.tensor import ShapeError, parameter
from .layers import DEFAULT_ARCH_OPS, OP_FACTORIES, Module, ReLUConvBN, FactorizedReduce, make_op


def cell_edges(n_nodes):
    """(source, target) pairs in alpha-row order.

    Nodes 0 and 1 are the cell inputs, 2 .. n_nodes-2 the intermediate nodes,
    n_nodes-1 the output. Each intermediate node takes every earlier node.
    """
    if n_nodes < 4:
        raise ValueError(f"a cell needs at least 4 nodes (2 inputs, 1 intermediate, 1 output), got {n_nodes}")
    return [(i, j) for j in range(2, n_nodes - 1) for i in range(j)]


class CellSpec:
    def __init__(self, n_nodes=6, op_set=DEFAULT_ARCH_OPS, is_reduction=False, alpha=None, rng=None):
        self.n_nodes = n_nodes
        self.op_set = tuple(op_set)
        for name in self.op_set:
            if name not in OP_FACTORIES:
                raise KeyError(f"unknown cell op {name!r}")
        self.is_reduction = is_reduction
        self.edges = cell_edges(n_nodes)
        shape = (len(self.edges), len(self.op_set))
        if alpha is None:
            alpha = np.zeros(shape, np.float32) if rng is None else 1e-3 * rng.standard_normal(shape)
        alpha = np.asarray(alpha, np.float32)
        if alpha.shape != shape:
            raise ShapeError(f"alpha must be {shape} (edges x ops), got {alpha.shape}")
        self.alpha = parameter(alpha.copy(), name="alpha_reduce" if is_reduction else "alpha_normal")

    @property
    def n_intermediate(self):
        return self.n_nodes - 3

    def edge_index(self, i, j):
        return self.edges.index((i, j))

    def mixture_weights(self):
        """Softmax of every alpha row, float64."""
        a = self.alpha.data.astype(np.float64)
        e = np.exp(a - a.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


def mixed_op_forward(x, edge_alpha, ops):
    weights = P.softmax(edge_alpha, axis=-1)
    out = None
    for f, op in enumerate(ops):
        y = op(x)
        if out is not None and y.shape != out.shape:
            raise ShapeError(f"mixed op: candidate {f} produced {y.shape}, expected {out.shape}")
        term = y * P.getitem(weights, f)
        out = term if out is None else out + term
    return out


class SearchCell(Module):
    """Weights of one stacked search cell; its alpha lives in a shared CellSpec."""

    def __init__(self, spec, c_prev2, c_prev, c, reduction_prev, rng, preprocess=True):
        self.is_reduction = spec.is_reduction
        self.op_set = spec.op_set
        self.n_nodes = spec.n_nodes
        if preprocess:
            self.pre0 = (FactorizedReduce(c_prev2, c, rng) if reduction_prev
                         else ReLUConvBN(c_prev2, c, 1, rng))
            self.pre1 = ReLUConvBN(c_prev, c, 1, rng)
        else:
            if not (c_prev2 == c_prev == c) or reduction_prev:
                raise ShapeError("cells without preprocessing need matching input channels")
            self.pre0 = self.pre1 = None
        self.edge_ops = []
        for i, _ in spec.edges:
            stride = 2 if spec.is_reduction and i < 2 else 1
            self.edge_ops.append(_EdgeOps([make_op(name, c, stride, rng) for name in spec.op_set]))
        self.out_channels = spec.n_intermediate * c

    def forward(self, s0, s1, spec):
        return cell_forward(s0, s1, spec, self)


class _EdgeOps(Module):
    def __init__(self, ops):
        self.ops = ops


def cell_forward(s0, s1, spec, cell):
    if cell.pre0 is not None:
        s0, s1 = cell.pre0(s0), cell.pre1(s1)
    if s0.shape != s1.shape:
        raise ShapeError(f"cell inputs disagree after preprocessing: {s0.shape} vs {s1.shape}")
    states = [s0, s1]
    row = 0
    for j in range(2, spec.n_nodes - 1):
        node = None
        for i in range(j):
            y = mixed_op_forward(states[i], P.getitem(spec.alpha, row), cell.edge_ops[row].ops)
            node = y if node is None else node + y
            row += 1
        states.append(node)
    return P.concat(states[2:], axis=1)


# ------------------------------------------------------------ discretization


@dataclass
class DiscreteCell:
    """nodes[k] lists the two retained (op name, source node) pairs of intermediate node k+2."""

    nodes: list = field(default_factory=list)
    is_reduction: bool = False

    @property
    def n_nodes(self):
        return len(self.nodes) + 3

    def ops(self):
        return {op for pairs in self.nodes for op, _ in pairs}


def discretize_cell(spec, keep=2):
    weights = spec.mixture_weights()
    candidates = [f for f, name in enumerate(spec.op_set) if name != "zero"]
    if not candidates:
        raise ValueError("op set has no operation besides 'zero'")
    nodes = []
    for j in range(2, spec.n_nodes - 1):
        scored = []
        for i in range(j):
            w = weights[spec.edge_index(i, j)]
            best = candidates[int(np.argmax(w[candidates]))]  # first maximum wins ties
            scored.append((-w[best], i, spec.op_set[best]))
        kept = sorted(scored)[:keep]
        nodes.append([(name, i) for _, i, name in sorted(kept, key=lambda s: s[1])])
    return DiscreteCell(nodes, spec.is_reduction)


def discretize(specs):
    return [discretize_cell(spec) for spec in specs]


# ----------------------------------------------------------- genotype text


class GenotypeError(ValueError):
    pass


def genotype_serialize(cells):
    doc = [
        {
            "reduction": cell.is_reduction,
            "nodes": [[{"op": op, "from": src} for op, src in pairs] for pairs in cell.nodes],
        }
        for cell in cells
    ]
    return json.dumps(doc, indent=1)


def genotype_parse(text, op_names=None):
    known = set(OP_FACTORIES) if op_names is None else set(op_names)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GenotypeError(f"malformed genotype at line {exc.lineno} column {exc.colno}: {exc.msg}") from None

    def need(cond, where, what):
        if not cond:
            raise GenotypeError(f"{where}: {what}")

    need(isinstance(doc, list), "document", "expected a list of cells")
    cells = []
    for c, entry in enumerate(doc):
        where = f"cells[{c}]"
        need(isinstance(entry, dict) and {"reduction", "nodes"} <= set(entry), where,
             "expected an object with 'reduction' and 'nodes'")
        need(isinstance(entry["reduction"], bool), f"{where}.reduction", "expected true or false")
        need(isinstance(entry["nodes"], list) and entry["nodes"], f"{where}.nodes", "expected a non-empty list")
        nodes = []
        for k, pairs in enumerate(entry["nodes"]):
            node_where = f"{where}.nodes[{k}]"
            need(isinstance(pairs, list) and pairs, node_where, "expected a non-empty list of inputs")
            parsed = []
            for e, item in enumerate(pairs):
                item_where = f"{node_where}[{e}]"
                need(isinstance(item, dict) and set(item) == {"op", "from"}, item_where,
                     "expected {\"op\": ..., \"from\": ...}")
                op, src = item["op"], item["from"]
                if op not in known or op == "zero":
                    raise GenotypeError(f"{item_where}.op: unknown operation {op!r}")
                need(isinstance(src, int) and not isinstance(src, bool) and 0 <= src < k + 2,
                     f"{item_where}.from", f"source must be an integer node index below {k + 2}, got {src!r}")
                parsed.append((op, src))
            nodes.append(parsed)
        cells.append(DiscreteCell(nodes, entry["reduction"]))
    return cells


# ---------------------------------------------------------- search space size


def search_space_size(n_nodes, n_ops):
    """Exact count of wirings (two inputs per intermediate node) times op pairs."""
    if n_nodes < 4:
        raise ValueError(f"search space size needs N >= 4, got {n_nodes}")
    if n_ops < 1:
        raise ValueError(f"need at least one candidate op, got {n_ops}")
    return n_ops ** 2 * math.prod(k * (k + 1) // 2 for k in range(1, n_nodes - 2))


def enumerate_search_space(n_nodes, n_ops):
    """Brute-force count of the same quantity, for checking small cases."""
    edges = cell_edges(n_nodes)
    wirings = 0
    for mask in itertools.product((0, 1), repeat=len(edges)):
        indeg = {}
        for (i, j), on in zip(edges, mask):
            indeg[j] = indeg.get(j, 0) + on
        if all(d == 2 for d in indeg.values()):
            wirings += 1
    op_pairs = sum(1 for _ in itertools.product(range(n_ops), repeat=2))
    return wirings * op_pairs


def alpha_snapshot(specs):
    """Rows of (cell index, source, target, softmax weights) for every edge."""
    rows = []
    for c, spec in enumerate(specs):
        weights = spec.mixture_weights()
        for e, (i, j) in enumerate(spec.edges):
            rows.append((c, i, j, weights[e]))
    return rows
