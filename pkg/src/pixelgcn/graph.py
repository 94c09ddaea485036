"""Weighted pixel graphs over the frame grid.

Selected (border) pixels receive in-edges from their k nearest pixels by
Euclidean grid distance; every other pixel stays isolated and, after the
self-loop insertion of :func:`renormalize`, aggregates only itself.  The
edge weight combines spatial proximity and RGB similarity:

    w(p1, p2) = (1 / d_E(p1, p2)) * exp(-||I(p1) - I(p2)|| / ||I_max||)

with ``||I_max|| = 255 * sqrt(3)``, the norm of the all-255 RGB vector, so
weights land in (0, 1] for grid neighbours.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .borders import BorderMask
from .frames import RgbFrame

MAX_RGB_NORM = 255.0 * math.sqrt(3.0)

_BGG_MAGIC = b"BGG1"


@dataclass(frozen=True)
class EdgeWeightParams:
    """Normalisation constant for the intensity term of the edge weight."""

    max_intensity_norm: float = MAX_RGB_NORM

    def __post_init__(self):
        if not self.max_intensity_norm > 0:
            raise ValueError("max_intensity_norm must be > 0")


@dataclass(frozen=True)
class PixelGraph:
    """Directed k-NN graph over H*W pixel nodes in CSR layout.

    Row i of (indptr, indices, weights) lists the in-edges of node i, i.e.
    the neighbours whose features node i aggregates.  Rows of non-selected
    nodes are empty.  Entries within a row are ordered by ascending distance
    with ties broken by ascending neighbour index.
    """

    num_nodes: int
    k: int
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if indptr.shape != (self.num_nodes + 1,) or indptr[0] != 0:
            raise ValueError("malformed CSR offsets")
        if indptr[-1] != indices.size or indices.size != weights.size:
            raise ValueError("CSR arrays disagree on edge count")
        if indices.size:
            if indices.min() < 0 or indices.max() >= self.num_nodes:
                raise ValueError("neighbour index out of range")
            if weights.min() <= 0 or weights.max() > 1:
                raise ValueError("edge weights must lie in (0, 1]")
            rows = np.repeat(np.arange(self.num_nodes), np.diff(indptr))
            if (rows == indices).any():
                raise ValueError("self-edges are not stored")
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "weights", weights)

    @property
    def num_edges(self) -> int:
        return int(self.indices.size)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def to_csr(self) -> sp.csr_matrix:
        """Adjacency A with A[i, j] = weight of the in-edge j -> i."""
        return sp.csr_matrix(
            (self.weights, self.indices, self.indptr),
            shape=(self.num_nodes, self.num_nodes),
        )


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetric propagation matrix D^-1/2 (A_sym + I) D^-1/2 in CSR layout."""

    matrix: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ValueError("adjacency must be square")
        if m.nnz and m.data.min() < 0:
            raise ValueError("propagation entries must be non-negative")
        diag = m.diagonal()
        if (diag <= 0).any():
            raise ValueError("every diagonal entry must be positive")
        asym = abs(m - m.T)
        if asym.nnz and asym.data.max() > 1e-9:
            raise ValueError("propagation matrix must be symmetric within 1e-9")

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        return self.matrix @ dense


def edge_weight(p1: tuple[int, int], p2: tuple[int, int], frame: RgbFrame,
                params: EdgeWeightParams = EdgeWeightParams()) -> float:
    """Weight between two pixels given as (row, col) coordinates."""
    if p1 == p2:
        raise ValueError("edge weight is undefined for identical pixels")
    h, w = frame.shape
    for y, x in (p1, p2):
        if not (0 <= y < h and 0 <= x < w):
            raise ValueError(f"pixel ({y}, {x}) outside {h}x{w} frame")
    dist = math.hypot(p1[0] - p2[0], p1[1] - p2[1])
    diff = frame.intensities[p1] - frame.intensities[p2]
    return math.exp(-np.linalg.norm(diff) / params.max_intensity_norm) / dist


def _sorted_offsets(radius: int, clip_to_disc: bool) -> list[tuple[int, int, int]]:
    """(dy, dx, d^2) offsets sorted by distance, ties by (dy, dx).

    For a fixed centre pixel, ascending (dy, dx) equals ascending row-major
    index of the neighbour, which is the documented tie-break.  (The two
    orders could only disagree for equal-distance offsets whose column gap
    reaches the frame width, and such a pair is never simultaneously
    in-bounds for one centre.)  With ``clip_to_disc`` the square is cut back
    to d <= radius so the listing is distance-complete up to the radius.
    """
    offsets = []
    r2 = radius * radius
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            d2 = dy * dy + dx * dx
            if clip_to_disc and d2 > r2:
                continue
            offsets.append((dy, dx, d2))
    offsets.sort(key=lambda o: (o[2], o[0], o[1]))
    return offsets


def build_graph(mask: BorderMask, frame: RgbFrame, k: int,
                params: EdgeWeightParams = EdgeWeightParams()) -> PixelGraph:
    """Connect every selected pixel to its k nearest pixels.

    Candidates are all pixels of the frame (selected or not); pixels outside
    the frame do not exist.  Offsets are scanned in ascending-distance order,
    so each node ends up with exactly min(k, num_nodes - 1) in-edges and the
    output is deterministic for fixed inputs.
    """
    if mask.shape != frame.shape:
        raise ValueError(f"mask {mask.shape} does not match frame {frame.shape}")
    h, w = frame.shape
    n = h * w
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of pixels ({n})")

    sel_y, sel_x = np.nonzero(mask.selected)      # row-major node order
    num_sel = sel_y.size
    if num_sel == 0:
        return PixelGraph(n, k, np.zeros(n + 1, dtype=np.int64),
                          np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64))

    max_radius = max(h, w)
    radius = min(max_radius, int(math.ceil(2.0 * math.sqrt(k))) + 1)
    while True:
        offsets = _sorted_offsets(radius, clip_to_disc=radius < max_radius)
        counts = np.zeros(num_sel, dtype=np.int64)
        node_parts, neigh_parts, rank_parts, d2_parts = [], [], [], []
        for rank, (dy, dx, d2) in enumerate(offsets):
            ny = sel_y + dy
            nx = sel_x + dx
            valid = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w) & (counts < k)
            hit = np.nonzero(valid)[0]
            if hit.size:
                node_parts.append(hit)
                neigh_parts.append(ny[hit] * w + nx[hit])
                rank_parts.append(np.full(hit.size, rank, dtype=np.int64))
                d2_parts.append(np.full(hit.size, d2, dtype=np.int64))
                counts[hit] += 1
                if counts.min() >= k:
                    break
        if counts.min() >= k or radius >= max_radius:
            break
        radius = min(max_radius, radius * 2)

    node_sel = np.concatenate(node_parts)
    neigh = np.concatenate(neigh_parts)
    rank = np.concatenate(rank_parts)
    d2 = np.concatenate(d2_parts)

    flat = np.arange(h * w).reshape(h, w)
    sel_flat = flat[sel_y, sel_x]
    centre = sel_flat[node_sel]

    rgb = frame.intensities.reshape(-1, 3)
    diff = rgb[centre] - rgb[neigh]
    intensity = np.exp(-np.sqrt((diff * diff).sum(axis=1)) / params.max_intensity_norm)
    weight = intensity / np.sqrt(d2.astype(np.float64))

    order = np.lexsort((rank, centre))
    row_lengths = np.zeros(n, dtype=np.int64)
    row_lengths[sel_flat] = counts
    indptr = np.concatenate([[0], np.cumsum(row_lengths)])
    return PixelGraph(n, k, indptr, neigh[order], weight[order])


def renormalize(graph: PixelGraph) -> NormalizedAdjacency:
    """Symmetrize by elementwise max, add self-loops, degree-normalize.

    Isolated nodes end up with a diagonal entry of exactly 1.
    """
    n = graph.num_nodes
    a = graph.to_csr()
    a_sym = a.maximum(a.T)
    a_hat = (a_sym + sp.identity(n, format="csr", dtype=np.float64)).tocsr()
    degrees = np.asarray(a_hat.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(degrees))
    normalized = (d_inv_sqrt @ a_hat @ d_inv_sqrt).tocsr()
    normalized.sort_indices()
    return NormalizedAdjacency(normalized)


def identity_adjacency(num_nodes: int) -> NormalizedAdjacency:
    """Propagation matrix of an edgeless graph: plain identity."""
    return NormalizedAdjacency(sp.identity(num_nodes, format="csr", dtype=np.float64))


def save_graph(graph: PixelGraph, path: str | Path) -> None:
    """Binary dump: magic BGG1, u32 num_nodes/k/nnz, u64 offsets, u32 indices, f32 weights."""
    with open(path, "wb") as fh:
        fh.write(_BGG_MAGIC)
        fh.write(struct.pack("<III", graph.num_nodes, graph.k, graph.num_edges))
        fh.write(graph.indptr.astype("<u8").tobytes())
        fh.write(graph.indices.astype("<u4").tobytes())
        fh.write(graph.weights.astype("<f4").tobytes())


def load_graph(path: str | Path) -> PixelGraph:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BGG_MAGIC:
            raise ValueError(f"not a BGG1 graph dump: {path}")
        num_nodes, k, nnz = struct.unpack("<III", fh.read(12))
        indptr = np.frombuffer(fh.read(8 * (num_nodes + 1)), dtype="<u8").astype(np.int64)
        indices = np.frombuffer(fh.read(4 * nnz), dtype="<u4").astype(np.int64)
        weights = np.frombuffer(fh.read(4 * nnz), dtype="<f4").astype(np.float64)
    return PixelGraph(num_nodes, k, indptr, indices, weights)
