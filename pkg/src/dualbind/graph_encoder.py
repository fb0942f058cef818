"""Molecular-complex encoder: stacked GIN layers plus a geometric consistency term.

Each layer computes ``MLP((1 + eps) * h_v + sum_{u in N(v)} h_u)`` with a
learnable per-layer eps (init 0). The encoder reads out over nodes (sum by
default, mean by config) into one fixed-width vector. A small affine
distance head predicts pairwise distances from concatenated node embedding
pairs; its squared error against the true 3-D distances is the
regularization term.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ComplexRecord
from .layers import Linear
from .rng import XorShiftRng

ELEMENT_VOCAB = ("C", "N", "O", "S", "P", "H", "F", "Cl", "Br", "I", "other")


class MolecularGraph:
    """Featurized complex: one-hot element || extra features, symmetric adjacency."""

    def __init__(self, node_features: np.ndarray, neighbors: list[list[int]], coords: np.ndarray, bond_types: list[str]):
        self.node_features = np.asarray(node_features, dtype=np.float64)
        self.neighbors = neighbors
        self.coords = np.asarray(coords, dtype=np.float64)
        self.bond_types = bond_types
        v = self.node_features.shape[0]
        self.adjacency = np.zeros((v, v))
        for i, nbrs in enumerate(neighbors):
            for j in nbrs:
                self.adjacency[i, j] = 1.0

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]


def featurize_complex(rec: ComplexRecord) -> MolecularGraph:
    """One-hot element plus the record's extra features; unknown elements map to 'other'."""
    v = len(rec.atoms)
    extra = len(rec.atoms[0].features)
    feats = np.zeros((v, len(ELEMENT_VOCAB) + extra))
    for i, atom in enumerate(rec.atoms):
        if atom.element in ELEMENT_VOCAB:
            feats[i, ELEMENT_VOCAB.index(atom.element)] = 1.0
        else:
            warnings.warn(f"unknown element {atom.element!r} in record {rec.id!r}; mapped to 'other'")
            feats[i, len(ELEMENT_VOCAB) - 1] = 1.0
        if len(atom.features) != extra:
            raise ValueError(f"record {rec.id!r}: atom {i} has {len(atom.features)} extra features, expected {extra}")
        feats[i, len(ELEMENT_VOCAB) :] = atom.features
    neighbors: list[list[int]] = [[] for _ in range(v)]
    btypes = []
    for b in rec.bonds:
        neighbors[b.i].append(b.j)
        neighbors[b.j].append(b.i)
        btypes.append(b.bond_type)
    coords = np.array([a.xyz for a in rec.atoms], dtype=np.float64)
    return MolecularGraph(feats, neighbors, coords, btypes)


class TwoLayerMlp:
    """affine -> ReLU -> affine, the per-layer GIN transform.

    The first affine is scaled down at init to offset the sum
    aggregation's (1 + degree) amplification, keeping activations near
    the input scale through the stack.
    """

    DEGREE_COMPENSATION = 5.0  # 1 + typical mean degree

    def __init__(self, rng: np.random.Generator, n_in: int, n_hidden: int, n_out: int):
        self.fc1 = Linear(rng, n_in, n_hidden)
        self.fc1.weight.values /= self.DEGREE_COMPENSATION
        self.fc2 = Linear(rng, n_hidden, n_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ad.relu(self.fc1(x)))

    def named_params(self, prefix: str):
        yield from self.fc1.named_params(prefix + ".fc1")
        yield from self.fc2.named_params(prefix + ".fc2")


class GinLayer:
    def __init__(self, mlp, epsilon: Tensor | None = None):
        self.epsilon = epsilon if epsilon is not None else ad.parameter(np.asarray(0.0))
        self.mlp = mlp

    def forward(self, h_prev: Tensor, adjacency: np.ndarray) -> Tensor:
        if h_prev.shape[0] != adjacency.shape[0]:
            raise ad.ShapeMismatchError(f"gin layer: {h_prev.shape[0]} feature rows vs {adjacency.shape[0]} adjacency rows")
        neighbor_sum = ad.matmul(ad.tensor(adjacency), h_prev)
        self_term = ad.smul(ad.add_scalar(self.epsilon, 1.0), h_prev)
        return self.mlp(ad.add(self_term, neighbor_sum))

    def named_params(self, prefix: str):
        yield prefix + ".epsilon", self.epsilon
        yield from self.mlp.named_params(prefix + ".mlp")


def gin_layer_forward(layer: GinLayer, h_prev: Tensor, adjacency: np.ndarray) -> Tensor:
    return layer.forward(h_prev, adjacency)


class GinEncoder:
    def __init__(self, rng: np.random.Generator, feature_dim: int, hidden: int = 64, num_layers: int = 3, readout: str = "sum"):
        if readout not in ("sum", "mean"):
            raise ValueError(f"readout must be 'sum' or 'mean', got {readout!r}")
        self.readout = readout
        self.hidden = hidden
        self.layers = []
        width = feature_dim
        for _ in range(num_layers):
            self.layers.append(GinLayer(TwoLayerMlp(rng, width, hidden, hidden)))
            width = hidden
        self.distance_head = Linear(rng, 2 * hidden, 1)
        # start near zero so the regularizer does not dwarf the data loss
        self.distance_head.weight.values *= 0.05

    def node_embeddings(self, g: MolecularGraph) -> Tensor:
        if g.num_nodes < 1:
            raise ValueError("cannot encode an empty graph")
        h = ad.tensor(g.node_features)
        for layer in self.layers:
            h = layer.forward(h, g.adjacency)
        return h

    def encode(self, g: MolecularGraph) -> tuple[Tensor, Tensor]:
        """Returns (pooled complex embedding, final node embedding matrix)."""
        h = self.node_embeddings(g)
        return ad.reduce(h, 0, self.readout), h

    def named_params(self, prefix: str = "graph"):
        for k, layer in enumerate(self.layers):
            yield from layer.named_params(f"{prefix}.layer{k}")
        yield from self.distance_head.named_params(prefix + ".distance_head")


def encode_graph(enc: GinEncoder, g: MolecularGraph) -> Tensor:
    pooled, _ = enc.encode(g)
    return pooled


def pairwise_distance(coords: np.ndarray) -> np.ndarray:
    """Full Euclidean distance matrix; symmetric with a zero diagonal."""
    coords = np.asarray(coords, dtype=np.float64)
    if not np.all(np.isfinite(coords)):
        raise ValueError("pairwise_distance: coordinates must be finite")
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def sample_node_pairs(num_nodes: int, max_pairs: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded choice of up to max_pairs (i, j) pairs with i < j.

    Uses every pair when few exist; otherwise a seeded draw without
    replacement. Fixed per (num_nodes, seed) so repeated epochs see the
    same pairs.
    """
    all_pairs = [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes)]
    if len(all_pairs) > max_pairs:
        XorShiftRng(seed).shuffle(all_pairs)
        all_pairs = all_pairs[:max_pairs]
        all_pairs.sort()
    if not all_pairs:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    i_idx, j_idx = zip(*all_pairs)
    return np.asarray(i_idx, dtype=np.intp), np.asarray(j_idx, dtype=np.intp)


def geometry_regularizer(
    enc: GinEncoder,
    node_embeddings: Tensor,
    coords: np.ndarray,
    max_pairs: int = 32,
    seed: int = 0,
) -> Tensor:
    """Mean squared error of the distance head over sampled node pairs.

    Returns an exact zero (constant) when fewer than two nodes exist.
    """
    if max_pairs < 1:
        raise ValueError(f"geometry_regularizer: max_pairs must be >= 1, got {max_pairs}")
    v = node_embeddings.shape[0]
    if v < 2:
        return ad.tensor(np.asarray(0.0))
    i_idx, j_idx = sample_node_pairs(v, max_pairs, seed)
    dists = pairwise_distance(coords)[i_idx, j_idx]
    h_i = ad.gather_rows(node_embeddings, i_idx)
    h_j = ad.gather_rows(node_embeddings, j_idx)
    predicted = ad.reshape(enc.distance_head(ad.concat_cols([h_i, h_j])), (len(i_idx),))
    return ad.mse(predicted, ad.tensor(dists))
