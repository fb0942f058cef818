"""The assembled dual-modal affinity model.

Forward path per sample: the GIN encoder pools the complex graph into
h_complex; the transformer encodes the residue sequence and pools it into
h_seq; the mutation-window branch (conv + BiLSTM over the embedded window)
merges with h_seq into the final sequence embedding; the fusion MLP maps
the concatenation of both modality vectors to the scalar prediction.

Ablations zero one modality vector and freeze that branch's parameters:
``graph_only`` feeds zeros for the sequence embedding, ``seq_only`` feeds
zeros for h_complex (and drops the geometry term, since the graph branch
is not being trained).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import RunConfig
from .data import PairedSample
from .fusion import FusionMlp, fuse_predict
from .graph_encoder import GinEncoder, MolecularGraph, featurize_complex, geometry_regularizer, sample_node_pairs
from .mutwin import MutationWindowEncoder, extract_window
from .rng import derive
from .seq_encoder import AttentionPooler, TokenizedSequence, TransformerEncoder, Vocabulary, pool, tokenize


@dataclass
class FeaturizedSample:
    sample_id: str
    graph: MolecularGraph
    tokens: TokenizedSequence
    window_ids: np.ndarray
    label: float
    geo_seed: int


class AffinityModel:
    def __init__(self, config: RunConfig, feature_dim: int):
        config.validate()
        self.config = config
        self.feature_dim = feature_dim
        rng = np.random.default_rng(config.seed)
        self.vocab = Vocabulary.named(config.alphabet)
        self.graph_encoder = GinEncoder(rng, feature_dim, hidden=config.gin_hidden, num_layers=config.gin_layers, readout=config.readout)
        self.seq_encoder = TransformerEncoder(
            rng,
            self.vocab,
            dim=config.embed_dim,
            num_layers=config.tx_layers,
            heads=config.tx_heads,
            ff_hidden=config.ff_hidden,
            max_len=config.max_len,
        )
        self.pooler = AttentionPooler(rng, config.embed_dim) if config.pool_mode == "attention" else None
        self.mut_encoder = MutationWindowEncoder(
            rng,
            embed_dim=config.embed_dim,
            half_width=config.window_half_width,
            conv_channels=config.conv_channels,
            kernel_width=config.conv_kernel,
            lstm_hidden=config.lstm_hidden,
        )
        self.fusion = FusionMlp(rng, in_dim=config.gin_hidden + config.embed_dim)

    # ------------------------------------------------------------------
    # parameters

    def named_parameters(self) -> dict[str, Tensor]:
        items: dict[str, Tensor] = {}
        for name, t in self.graph_encoder.named_params("graph"):
            items[name] = t
        for name, t in self.seq_encoder.named_params("seq"):
            items[name] = t
        if self.pooler is not None:
            for name, t in self.pooler.named_params("pooler"):
                items[name] = t
        for name, t in self.mut_encoder.named_params("mutwin"):
            items[name] = t
        for name, t in self.fusion.named_params("fusion"):
            items[name] = t
        return items

    def trainable_parameters(self, ablation: str) -> dict[str, Tensor]:
        """Fusion always trains; each modality branch only in modes that use it."""
        params = {}
        for name, t in self.named_parameters().items():
            branch = name.split(".", 1)[0]
            if branch in ("graph",) and ablation == "seq_only":
                continue
            if branch in ("seq", "pooler", "mutwin") and ablation == "graph_only":
                continue
            if branch in ("seq",) and not self.config.finetune_seq and ablation != "graph_only":
                continue
            params[name] = t
        return params

    # ------------------------------------------------------------------
    # featurization

    def featurize(self, sample: PairedSample) -> FeaturizedSample:
        graph = featurize_complex(sample.complex)
        tokens = tokenize(sample.sequence, self.vocab, self.config.max_len)
        center = tokens.mutation_pos if tokens.mutation_pos is not None else len(tokens.ids) // 2
        window = extract_window(tokens.ids, center, self.config.window_half_width, self.vocab.pad_id)
        return FeaturizedSample(
            sample_id=sample.complex.id,
            graph=graph,
            tokens=tokens,
            window_ids=window.token_ids,
            label=sample.label,
            geo_seed=derive(self.config.seed, _stable_id_hash(sample.complex.id)),
        )

    def featurize_all(self, samples: list[PairedSample]) -> list[FeaturizedSample]:
        return [self.featurize(s) for s in samples]

    # ------------------------------------------------------------------
    # forward

    def sequence_embedding(self, fs: FeaturizedSample) -> Tensor:
        h = self.seq_encoder.forward(fs.tokens.ids)
        h_seq = pool(h, self.config.pool_mode, self.pooler)
        window_embedding = self.seq_encoder.embed_tokens(fs.window_ids)
        return self.mut_encoder.forward(window_embedding, h_seq)

    def forward_sample(self, fs: FeaturizedSample, with_geo: bool = True) -> tuple[Tensor, Tensor | None]:
        """Returns (scalar prediction, geometry term or None)."""
        ablation = self.config.ablation
        zero_vec_graph = ad.tensor(np.zeros(self.config.gin_hidden))
        zero_vec_seq = ad.tensor(np.zeros(self.config.embed_dim))

        geo = None
        if ablation == "seq_only":
            h_complex = zero_vec_graph
        else:
            h_complex, node_h = self.graph_encoder.encode(fs.graph)
            if with_geo:
                geo = geometry_regularizer(self.graph_encoder, node_h, fs.graph.coords, self.config.geo_pairs, fs.geo_seed)

        if ablation == "graph_only":
            h_seq_final = zero_vec_seq
        else:
            h_seq_final = self.sequence_embedding(fs)

        return fuse_predict(self.fusion, h_complex, h_seq_final), geo

    def predict_value(self, fs: FeaturizedSample) -> float:
        with ad.no_grad():
            pred, _ = self.forward_sample(fs, with_geo=False)
        return pred.item()


def _stable_id_hash(text: str) -> int:
    h = 0
    for ch in text:
        h = (h * 131 + ord(ch)) & ((1 << 64) - 1)
    return h
