"""Sequence branch: tokenizer, small transformer encoder, pooling, MLM pretraining.

The encoder is a from-scratch stand-in for a large pretrained protein
language model: token embeddings plus sinusoidal positions feed L post-norm
blocks (multi-head self-attention, then a two-layer feed-forward, each with
a residual connection and layer normalization). Pretraining is standard
masked-language modeling: 15% of positions selected, of which 80% become
MASK, 10% a random alphabet token, 10% stay unchanged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import SequenceRecord, alphabet_for
from .layers import Linear
from .optim import AdamState, adam_step
from .rng import XorShiftRng, derive


class Vocabulary:
    """Alphabet symbols followed by PAD, MASK, UNK specials."""

    def __init__(self, alphabet: str):
        self.alphabet = alphabet
        self.pad_id = len(alphabet)
        self.mask_id = len(alphabet) + 1
        self.unk_id = len(alphabet) + 2
        self.size = len(alphabet) + 3
        self._to_id = {ch: i for i, ch in enumerate(alphabet)}

    @staticmethod
    def named(name: str) -> "Vocabulary":
        return Vocabulary(alphabet_for(name))

    def encode(self, ch: str) -> int:
        return self._to_id.get(ch, self.unk_id)

    def decode(self, token_id: int) -> str:
        if token_id < len(self.alphabet):
            return self.alphabet[token_id]
        return {self.pad_id: "<pad>", self.mask_id: "<mask>", self.unk_id: "<unk>"}[token_id]


@dataclass
class TokenizedSequence:
    ids: np.ndarray
    mutation_pos: int | None = None


def tokenize(record: SequenceRecord, vocab: Vocabulary, max_len: int = 128) -> TokenizedSequence:
    """Token ids in input order; over-long inputs truncate with a warning."""
    residues = record.residues
    if len(residues) > max_len:
        warnings.warn(f"sequence {record.id!r} of length {len(residues)} truncated to {max_len}")
        residues = residues[:max_len]
    ids = np.array([vocab.encode(ch) for ch in residues], dtype=np.intp)
    pos = record.mutation_pos
    if pos is not None and pos >= len(residues):
        pos = len(residues) - 1
    return TokenizedSequence(ids=ids, mutation_pos=pos)


def detokenize(tokens: TokenizedSequence, vocab: Vocabulary) -> str:
    return "".join(vocab.decode(int(i)) for i in tokens.ids)


def sinusoidal_table(max_len: int, dim: int) -> np.ndarray:
    positions = np.arange(max_len)[:, None]
    div = np.exp(np.arange(0, dim, 2) * (-np.log(10000.0) / dim))
    table = np.zeros((max_len, dim))
    table[:, 0::2] = np.sin(positions * div)
    table[:, 1::2] = np.cos(positions * div)
    return table


class TransformerBlock:
    def __init__(self, rng: np.random.Generator, dim: int, heads: int, ff_hidden: int):
        if dim % heads != 0:
            raise ValueError(f"model dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.wo = Linear(rng, dim, dim)
        self.ff1 = Linear(rng, dim, ff_hidden)
        self.ff2 = Linear(rng, ff_hidden, dim)
        self.ln1_gamma = ad.parameter(np.ones(dim))
        self.ln1_beta = ad.parameter(np.zeros(dim))
        self.ln2_gamma = ad.parameter(np.ones(dim))
        self.ln2_beta = ad.parameter(np.zeros(dim))

    def forward(self, x: Tensor, attn_sink: list | None = None) -> Tensor:
        attended = ad.multi_head_attention(
            x,
            self.wq.weight,
            self.wq.bias,
            self.wk.weight,
            self.wk.bias,
            self.wv.weight,
            self.wv.bias,
            self.wo.weight,
            self.wo.bias,
            self.heads,
            attn_sink=attn_sink,
        )
        x = ad.layer_norm_rows(ad.add(x, attended), self.ln1_gamma, self.ln1_beta)
        ff = self.ff2(ad.relu(self.ff1(x)))
        return ad.layer_norm_rows(ad.add(x, ff), self.ln2_gamma, self.ln2_beta)

    def named_params(self, prefix: str):
        for name, sub in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo), ("ff1", self.ff1), ("ff2", self.ff2)):
            yield from sub.named_params(f"{prefix}.{name}")
        yield prefix + ".ln1_gamma", self.ln1_gamma
        yield prefix + ".ln1_beta", self.ln1_beta
        yield prefix + ".ln2_gamma", self.ln2_gamma
        yield prefix + ".ln2_beta", self.ln2_beta


class TransformerEncoder:
    def __init__(
        self,
        rng: np.random.Generator,
        vocab: Vocabulary,
        dim: int = 64,
        num_layers: int = 2,
        heads: int = 4,
        ff_hidden: int = 256,
        max_len: int = 128,
    ):
        self.vocab = vocab
        self.dim = dim
        self.max_len = max_len
        # token signal must not drown under the unit-scale positional table
        self.embedding = ad.parameter(rng.normal(0.0, 0.3, size=(vocab.size, dim)))
        self.positional = sinusoidal_table(max_len, dim)
        self.blocks = [TransformerBlock(rng, dim, heads, ff_hidden) for _ in range(num_layers)]

    def forward(self, token_ids: np.ndarray, attn_sink: list | None = None) -> Tensor:
        n = len(token_ids)
        if n < 1:
            raise ValueError("encoder_forward: empty token sequence")
        if n > self.max_len:
            raise ValueError(f"encoder_forward: {n} tokens exceeds max_len {self.max_len}; tokenize should have truncated")
        x = ad.add(ad.gather_rows(self.embedding, token_ids), ad.tensor(self.positional[:n]))
        for block in self.blocks:
            x = block.forward(x, attn_sink)
        return x

    def embed_tokens(self, token_ids: np.ndarray) -> Tensor:
        return ad.gather_rows(self.embedding, np.asarray(token_ids, dtype=np.intp))

    def named_params(self, prefix: str = "seq"):
        yield prefix + ".embedding", self.embedding
        for i, block in enumerate(self.blocks):
            yield from block.named_params(f"{prefix}.block{i}")


def encoder_forward(enc: TransformerEncoder, tokens: TokenizedSequence, attn_sink: list | None = None) -> Tensor:
    return enc.forward(tokens.ids, attn_sink)


class AttentionPooler:
    """One learned score per residue, softmax-normalized combination weights."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.score_vector = ad.parameter(glorot_vec(rng, dim))

    def __call__(self, h: Tensor) -> Tensor:
        n, d = h.shape
        scores = ad.transpose(ad.matmul(h, ad.reshape(self.score_vector, (d, 1))))
        weights = ad.softmax_rows(scores)
        return ad.reshape(ad.matmul(weights, h), (d,))

    def named_params(self, prefix: str):
        yield prefix + ".score_vector", self.score_vector


def glorot_vec(rng: np.random.Generator, dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (dim + 1))
    return rng.uniform(-limit, limit, size=dim)


def pool(h: Tensor, mode: str = "mean", pooler: AttentionPooler | None = None) -> Tensor:
    if mode == "mean":
        return ad.reduce(h, 0, "mean")
    if mode == "attention":
        if pooler is None:
            raise ValueError("attention pooling needs an AttentionPooler")
        return pooler(h)
    raise ValueError(f"pool: unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# masked-language-model pretraining


def mlm_mask(
    token_ids: np.ndarray,
    vocab: Vocabulary,
    seed: int,
    mask_prob: float = 0.15,
    mask_frac: float = 0.8,
    random_frac: float = 0.1,
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt a copy of the tokens; returns (corrupted ids, target positions).

    Each position is selected independently with mask_prob; if nothing is
    selected one position is forced so every sequence trains. Selected
    positions become MASK with mask_frac probability, a random alphabet
    token with random_frac, and stay unchanged otherwise.
    """
    n = len(token_ids)
    if n < 1:
        raise ValueError("mlm_mask: empty sequence")
    rng = XorShiftRng(seed)
    selected = [i for i in range(n) if rng.uniform() < mask_prob]
    if not selected:
        selected = [rng.randint(0, n - 1)]
    corrupted = token_ids.copy()
    for i in selected:
        u = rng.uniform()
        if u < mask_frac:
            corrupted[i] = vocab.mask_id
        elif u < mask_frac + random_frac:
            corrupted[i] = rng.randint(0, len(vocab.alphabet) - 1)
        # else: leave unchanged, still a prediction target
    return corrupted, np.asarray(selected, dtype=np.intp)


class MlmHead:
    def __init__(self, rng: np.random.Generator, dim: int, vocab_size: int):
        # small init keeps untrained logits near uniform (loss ~ ln vocab)
        self.projection = Linear(rng, dim, vocab_size)
        self.projection.weight.values[...] = rng.normal(0.0, 0.02, size=(dim, vocab_size))

    def __call__(self, h: Tensor) -> Tensor:
        return self.projection(h)

    def named_params(self, prefix: str = "mlm"):
        yield from self.projection.named_params(prefix + ".projection")


def pretrain_step(
    enc: TransformerEncoder,
    head: MlmHead,
    batch: list[np.ndarray],
    params: list[Tensor],
    opt: AdamState,
    seed: int,
    mask_prob: float = 0.15,
) -> tuple[float, float]:
    """One MLM step over a batch of token-id arrays.

    Loss is the mean cross-entropy over all target positions in the batch;
    returns (loss, masked-token accuracy). Deterministic in seed.
    """
    if not batch:
        raise ValueError("pretrain_step: empty batch")
    ce_sums = []
    total_targets = 0
    correct = 0
    for b, ids in enumerate(batch):
        corrupted, targets = mlm_mask(ids, enc.vocab, derive(seed, b), mask_prob=mask_prob)
        h = enc.forward(corrupted)
        logits = head(ad.gather_rows(h, targets))
        labels = ids[targets]
        ce_sums.append(ad.cross_entropy_rows(logits, labels, reduction="sum"))
        total_targets += len(targets)
        correct += int((logits.values.argmax(axis=1) == labels).sum())
    loss = ad.scale(ad.sum_all(ad.stack_scalars(ce_sums)), 1.0 / total_targets)
    ad.backward(loss)
    adam_step(params, opt)
    return loss.item(), correct / total_targets
