"""Hypergraph construction and the normalized propagation operator.

A hypergraph is held as a vertex count, an ordered list of hyperedges
(non-empty vertex-index sets), and the dense 0/1 incidence matrix ``H``
(one row per vertex, one column per hyperedge).  The propagation operator

    D_v^{-1/2} H D_e^{-1} H^T D_v^{-1/2}

is symmetric positive semi-definite with spectrum in [0, 1] and fixes the
vector of square-root vertex degrees; it is computed lazily and cached on
the hypergraph.  All values here are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ValidationError


class Hypergraph:
    """Immutable vertex/hyperedge structure with a dense incidence matrix.

    Hyperedges keep their given order (duplicates allowed, one incidence
    column each); vertex indices within an edge are stored sorted.
    """

    __slots__ = ("n_vertices", "hyperedges", "incidence", "_laplacian")

    def __init__(self, n_vertices: int, hyperedges: Sequence[Iterable[int]]):
        n = int(n_vertices)
        if n < 1:
            raise ValidationError(f"n_vertices must be positive, got {n_vertices}")
        edges = []
        for j, edge in enumerate(hyperedges):
            members = [int(v) for v in edge]
            if not members:
                raise ValidationError(f"hyperedge {j} is empty")
            if len(set(members)) != len(members):
                raise ValidationError(f"hyperedge {j} contains duplicate vertices")
            if min(members) < 0 or max(members) >= n:
                raise ValidationError(
                    f"hyperedge {j} contains out-of-range vertices for |V|={n}"
                )
            edges.append(tuple(sorted(members)))
        h = np.zeros((n, len(edges)), dtype=np.float64)
        for j, edge in enumerate(edges):
            h[list(edge), j] = 1.0
        h.flags.writeable = False
        self.n_vertices = n
        self.hyperedges: tuple[tuple[int, ...], ...] = tuple(edges)
        self.incidence = h
        self._laplacian: Laplacian | None = None

    @property
    def n_edges(self) -> int:
        return len(self.hyperedges)

    def __repr__(self) -> str:
        return f"Hypergraph(n_vertices={self.n_vertices}, n_edges={self.n_edges})"


@dataclass(frozen=True)
class DegreePair:
    """Vertex degrees (hyperedges containing v) and hyperedge degrees (|e|)."""

    d_v: np.ndarray
    d_e: np.ndarray


@dataclass(frozen=True)
class Laplacian:
    """The symmetric normalized propagation operator of a hypergraph."""

    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def degrees(g: Hypergraph) -> DegreePair:
    """Row and column sums of the incidence matrix, as integer vectors."""
    d_v = g.incidence.sum(axis=1).astype(np.int64)
    d_e = g.incidence.sum(axis=0).astype(np.int64)
    d_v.flags.writeable = False
    d_e.flags.writeable = False
    return DegreePair(d_v=d_v, d_e=d_e)


def laplacian(g: Hypergraph) -> Laplacian:
    """Normalized propagation operator, cached on the hypergraph.

    Zero-degree vertices get all-zero rows and columns (their scaling factor
    is defined as 0 instead of dividing by zero), which leaves isolated
    vertices untouched by propagation rather than producing NaNs.
    """
    if g._laplacian is not None:
        return g._laplacian
    h = g.incidence
    d_v = h.sum(axis=1)
    d_e = h.sum(axis=0)
    inv_sqrt_dv = np.zeros_like(d_v)
    positive = d_v > 0
    inv_sqrt_dv[positive] = 1.0 / np.sqrt(d_v[positive])
    # d_e > 0 is guaranteed: hyperedges are non-empty by construction.
    b = (h * inv_sqrt_dv[:, None]) * np.sqrt(1.0 / d_e)[None, :]
    m = b @ b.T
    m = (m + m.T) * 0.5
    m.flags.writeable = False
    lap = Laplacian(matrix=m)
    g._laplacian = lap
    return lap


def build_knn_hypergraph(features: np.ndarray, k: int) -> Hypergraph:
    """One hyperedge per vertex: the vertex plus its k nearest neighbors.

    Distances are Euclidean over feature rows; ties are broken by ascending
    vertex index, so construction is deterministic.  Every hyperedge has
    cardinality ``k + 1``; duplicate hyperedges are kept (one incidence
    column per central vertex).
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValidationError(f"features must be 2-D, got rank {feats.ndim}")
    if not np.isfinite(feats).all():
        raise ValidationError("features contain non-finite values")
    if k < 1:
        raise ParameterError(f"k must be a positive integer, got {k}")
    n = feats.shape[0]
    if n < k + 1:
        raise ValidationError(f"need at least k+1={k + 1} vertices, got {n}")
    edges = []
    for i in range(n):
        diff = feats - feats[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        order = np.argsort(d2, kind="stable")
        neighbors = [int(j) for j in order if j != i][:k]
        edges.append([i, *neighbors])
    return Hypergraph(n, edges)


@dataclass(frozen=True)
class Modality:
    """One feature source: a feature matrix plus its own hypergraph."""

    features: np.ndarray
    hypergraph: Hypergraph

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValidationError("modality features must be 2-D")
        if not np.isfinite(feats).all():
            raise ValidationError("modality features contain non-finite values")
        if feats.shape[0] != self.hypergraph.n_vertices:
            raise ValidationError(
                f"feature rows ({feats.shape[0]}) disagree with hypergraph "
                f"vertices ({self.hypergraph.n_vertices})"
            )
        feats = feats.copy() if feats is self.features else feats
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


class MultiModalDataset:
    """M modalities over one shared vertex set, with labels and split masks.

    ``train_mask`` and ``test_mask`` are disjoint boolean vectors; labels are
    class indices in ``[0, n_classes)``.  Instances are immutable and safe to
    share across concurrent readers.
    """

    __slots__ = ("name", "modalities", "labels", "train_mask", "test_mask",
                 "n_classes", "_concat_cell")

    def __init__(self, modalities, labels, train_mask, test_mask, n_classes,
                 name: str = "dataset"):
        modalities = tuple(modalities)
        if not modalities:
            raise ValidationError("a dataset needs at least one modality")
        n = modalities[0].hypergraph.n_vertices
        for idx, m in enumerate(modalities):
            if m.hypergraph.n_vertices != n:
                raise ValidationError(
                    f"modality {idx} has {m.hypergraph.n_vertices} vertices, "
                    f"expected {n}"
                )
        labels = np.asarray(labels, dtype=np.int64).copy()
        if labels.shape != (n,):
            raise ValidationError(f"labels must have shape ({n},)")
        c = int(n_classes)
        if c < 2:
            raise ValidationError(f"n_classes must be at least 2, got {n_classes}")
        if labels.min() < 0 or labels.max() >= c:
            raise ValidationError(f"labels must lie in [0, {c})")
        train_mask = np.asarray(train_mask, dtype=bool).copy()
        test_mask = np.asarray(test_mask, dtype=bool).copy()
        if train_mask.shape != (n,) or test_mask.shape != (n,):
            raise ValidationError(f"masks must be boolean vectors of length {n}")
        if (train_mask & test_mask).any():
            raise ValidationError("train and test masks overlap")
        for arr in (labels, train_mask, test_mask):
            arr.flags.writeable = False
        self.name = str(name)
        self.modalities = modalities
        self.labels = labels
        self.train_mask = train_mask
        self.test_mask = test_mask
        self.n_classes = c
        # One-slot cache shared with mask views, so the concatenated
        # hypergraph is built at most once per underlying dataset.
        self._concat_cell: list[tuple[np.ndarray, Hypergraph] | None] = [None]

    @property
    def n_vertices(self) -> int:
        return self.modalities[0].hypergraph.n_vertices

    @property
    def n_modalities(self) -> int:
        return len(self.modalities)

    @property
    def label_rate(self) -> float:
        return float(self.train_mask.sum()) / self.n_vertices

    def replace_masks(self, train_mask, test_mask) -> "MultiModalDataset":
        """A view of this dataset with different split masks.

        Modalities (and their cached operators) are shared, so derived splits
        cost nothing beyond the masks themselves.
        """
        ds = MultiModalDataset.__new__(MultiModalDataset)
        train_mask = np.asarray(train_mask, dtype=bool).copy()
        test_mask = np.asarray(test_mask, dtype=bool).copy()
        n = self.n_vertices
        if train_mask.shape != (n,) or test_mask.shape != (n,):
            raise ValidationError(f"masks must be boolean vectors of length {n}")
        if (train_mask & test_mask).any():
            raise ValidationError("train and test masks overlap")
        train_mask.flags.writeable = False
        test_mask.flags.writeable = False
        ds.name = self.name
        ds.modalities = self.modalities
        ds.labels = self.labels
        ds.train_mask = train_mask
        ds.test_mask = test_mask
        ds.n_classes = self.n_classes
        ds._concat_cell = self._concat_cell
        return ds

    def __repr__(self) -> str:
        return (
            f"MultiModalDataset(name={self.name!r}, n_vertices={self.n_vertices}, "
            f"n_modalities={self.n_modalities}, n_classes={self.n_classes})"
        )


def concat_modalities(ds: MultiModalDataset) -> tuple[np.ndarray, Hypergraph]:
    """Column-wise concatenation of all features and all incidence matrices.

    This is the single-hypergraph reduction of a multi-modal dataset: the
    hyperedge lists are unioned (keeping one column per original hyperedge)
    and feature matrices are stacked side by side.  Cached on the dataset.
    """
    if ds._concat_cell[0] is not None:
        return ds._concat_cell[0]
    features = np.hstack([m.features for m in ds.modalities])
    edges: list[tuple[int, ...]] = []
    for m in ds.modalities:
        edges.extend(m.hypergraph.hyperedges)
    g = Hypergraph(ds.n_vertices, edges)
    features.flags.writeable = False
    ds._concat_cell[0] = (features, g)
    return ds._concat_cell[0]
