"""Binary regression trees: a mutable form for MCMC and a frozen array form.

Routing rule everywhere: ``x[var] <= cut`` goes left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@njit(cache=True)
def _descend(var, cut, left, right, roots, x):
    n, k = x.shape[0], roots.size
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        for j in range(k):
            node = roots[j]
            while var[node] >= 0:
                if x[i, var[node]] <= cut[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, j] = node
    return out


@njit(cache=True)
def _forest_sum(var, cut, left, right, value, roots, x):
    n, k = x.shape[0], roots.size
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(k):
            node = roots[j]
            while var[node] >= 0:
                if x[i, var[node]] <= cut[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc
    return out


class Node:
    __slots__ = ("var", "cut", "left", "right", "parent", "depth", "idx", "mu", "valid")

    def __init__(self, idx: np.ndarray, depth: int = 0, parent: "Node | None" = None, mu: float = 0.0):
        self.var = -1
        self.cut = 0.0
        self.left: Node | None = None
        self.right: Node | None = None
        self.parent = parent
        self.depth = depth
        self.idx = idx
        self.mu = mu
        self.valid = None  # cached splittable columns, idx never changes

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def is_nog(self) -> bool:
        """Internal node whose two children are both leaves."""
        return self.left is not None and self.left.is_leaf and self.right.is_leaf

    def __repr__(self):
        if self.is_leaf:
            return f"Leaf(n={self.idx.size}, mu={self.mu:.4g})"
        return f"Split(x{self.var} <= {self.cut:.4g})"


class Tree:
    """Mutable tree; each node keeps the indices of training rows it holds."""

    def __init__(self, n: int):
        self.root = Node(np.arange(n))

    def nodes(self) -> list[Node]:
        out, stack = [], [self.root]
        while stack:
            nd = stack.pop()
            out.append(nd)
            if not nd.is_leaf:
                stack.append(nd.right)
                stack.append(nd.left)
        return out

    def leaves(self) -> list[Node]:
        return [nd for nd in self.nodes() if nd.is_leaf]

    def nogs(self) -> list[Node]:
        return [nd for nd in self.nodes() if nd.is_nog]

    def internal(self) -> list[Node]:
        return [nd for nd in self.nodes() if not nd.is_leaf]

    @property
    def is_stump(self) -> bool:
        return self.root.is_leaf

    @staticmethod
    def grow(node: Node, var: int, cut: float, x: np.ndarray) -> None:
        go_left = x[node.idx, var] <= cut
        node.var, node.cut = int(var), float(cut)
        node.left = Node(node.idx[go_left], node.depth + 1, node)
        node.right = Node(node.idx[~go_left], node.depth + 1, node)

    @staticmethod
    def prune(node: Node) -> None:
        node.var, node.cut = -1, 0.0
        node.left = node.right = None

    @staticmethod
    def resplit(node: Node, var: int, cut: float, x: np.ndarray) -> None:
        """Replace the rule of a nog node, keeping its children as leaves."""
        Tree.prune(node)
        Tree.grow(node, var, cut, x)

    def fit(self, n: int) -> np.ndarray:
        out = np.empty(n)
        for leaf in self.leaves():
            out[leaf.idx] = leaf.mu
        return out

    def structure(self):
        """Nested tuples of split rules, for structural comparison."""

        def rec(nd):
            if nd.is_leaf:
                return None
            return (nd.var, nd.cut, rec(nd.left), rec(nd.right))

        return rec(self.root)

    def freeze(self) -> "CompactTree":
        nodes = []

        def rec(nd):
            i = len(nodes)
            nodes.append(None)
            if nd.is_leaf:
                nodes[i] = (-1, 0.0, -1, -1, nd.mu)
            else:
                left = rec(nd.left)
                right = rec(nd.right)
                nodes[i] = (nd.var, nd.cut, left, right, 0.0)
            return i

        rec(self.root)
        var, cut, left, right, value = map(np.array, zip(*nodes))
        return CompactTree(
            var.astype(np.int32), cut.astype(float), left.astype(np.int32), right.astype(np.int32), value.astype(float)
        )


@dataclass(frozen=True)
class CompactTree:
    """Array form; node 0 is the root, ``var == -1`` marks a leaf."""

    var: np.ndarray
    cut: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.var >= 0))

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            v = self.var[node]
            internal = v >= 0
            if not internal.any():
                return self.value[node]
            goleft = x[rows, np.where(internal, v, 0)] <= self.cut[node]
            node = np.where(internal, np.where(goleft, self.left[node], self.right[node]), node)

    def to_dict(self) -> dict:
        return {
            "var": self.var.tolist(),
            "cut": self.cut.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompactTree":
        return cls(
            np.asarray(d["var"], np.int32),
            np.asarray(d["cut"], float),
            np.asarray(d["left"], np.int32),
            np.asarray(d["right"], np.int32),
            np.asarray(d["value"], float),
        )

    @classmethod
    def stump(cls, value: float) -> "CompactTree":
        return cls(np.array([-1], np.int32), np.zeros(1), np.array([-1], np.int32), np.array([-1], np.int32), np.array([value], float))


@dataclass(frozen=True)
class Forest:
    """All trees of one posterior draw, concatenated for vectorised prediction."""

    var: np.ndarray
    cut: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray

    @classmethod
    def from_trees(cls, trees: list[CompactTree]) -> "Forest":
        offsets = np.cumsum([0] + [t.var.size for t in trees[:-1]])
        shift = lambda a, o: np.where(a >= 0, a + o, -1)  # noqa: E731
        return cls(
            var=np.concatenate([t.var for t in trees]).astype(np.int64),
            cut=np.concatenate([t.cut for t in trees]).astype(float),
            left=np.concatenate([shift(t.left, o) for t, o in zip(trees, offsets)]).astype(np.int64),
            right=np.concatenate([shift(t.right, o) for t, o in zip(trees, offsets)]).astype(np.int64),
            value=np.concatenate([t.value for t in trees]).astype(float),
            roots=np.asarray(offsets, dtype=np.int64),
        )

    @property
    def n_trees(self) -> int:
        return int(self.roots.size)

    def trees(self) -> list[CompactTree]:
        out = []
        ends = list(self.roots[1:]) + [self.var.size]
        for start, end in zip(self.roots, ends):
            unshift = lambda a: np.where(a >= 0, a - start, -1).astype(np.int32)  # noqa: E731
            out.append(
                CompactTree(self.var[start:end], self.cut[start:end], unshift(self.left[start:end]),
                            unshift(self.right[start:end]), self.value[start:end])
            )
        return out

    def leaf_nodes(self, x: np.ndarray) -> np.ndarray:
        """(n, K) matrix of the leaf each row reaches in each tree."""
        x = np.ascontiguousarray(x, dtype=float)
        return _descend(self.var, self.cut, self.left, self.right, self.roots, x)

    def per_tree(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_nodes(x)]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        return _forest_sum(self.var, self.cut, self.left, self.right, self.value, self.roots, x)

    def split_counts(self, p: int) -> np.ndarray:
        v = self.var[self.var >= 0]
        return np.bincount(v, minlength=p)
