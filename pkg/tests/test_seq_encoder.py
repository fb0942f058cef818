import numpy as np
import pytest

from dualbind import autodiff as ad
from dualbind.data import SequenceRecord
from dualbind.optim import AdamState
from dualbind.seq_encoder import (
    AttentionPooler,
    MlmHead,
    TransformerEncoder,
    Vocabulary,
    detokenize,
    encoder_forward,
    mlm_mask,
    pool,
    pretrain_step,
    tokenize,
)

from helpers import check_gradients


@pytest.fixture
def vocab():
    return Vocabulary.named("amino")


@pytest.fixture
def encoder(vocab):
    return TransformerEncoder(np.random.default_rng(0), vocab, dim=16, num_layers=2, heads=2, ff_hidden=32, max_len=64)


def test_vocabulary_layout(vocab):
    assert vocab.size == 23
    assert vocab.pad_id == 20
    assert vocab.mask_id == 21
    assert vocab.unk_id == 22
    ids = {vocab.encode(ch) for ch in vocab.alphabet}
    assert ids == set(range(20))  # bijection over the alphabet


def test_tokenize_first_symbol(vocab):
    tokens = tokenize(SequenceRecord(id="x", residues="AAA"), vocab)
    assert list(tokens.ids) == [0, 0, 0]


def test_tokenize_truncates_with_warning(vocab):
    rec = SequenceRecord(id="long", residues="A" * 200, mutation_pos=180)
    with pytest.warns(UserWarning, match="truncated"):
        tokens = tokenize(rec, vocab, max_len=128)
    assert len(tokens.ids) == 128
    assert tokens.mutation_pos == 127  # clamped


def test_tokenize_detokenize_round_trip(vocab):
    rec = SequenceRecord(id="x", residues="ACDEFGHIKLMNPQRSTVWY")
    assert detokenize(tokenize(rec, vocab), vocab) == rec.residues


def test_single_token_attention_is_one(vocab, encoder):
    sink = []
    tokens = tokenize(SequenceRecord(id="x", residues="A"), vocab)
    encoder_forward(encoder, tokens, attn_sink=sink)
    assert len(sink) == 4  # 2 layers x 2 heads
    for matrix in sink:
        assert matrix.shape == (1, 1)
        assert abs(matrix[0, 0] - 1.0) < 1e-15


@pytest.mark.parametrize("n", [1, 7, 64])
def test_output_shape_contract(vocab, encoder, n):
    tokens = tokenize(SequenceRecord(id="x", residues="A" * n), vocab)
    out = encoder_forward(encoder, tokens)
    assert out.shape == (n, 16)


def test_attention_rows_sum_to_one_all_layers(vocab, encoder):
    rng = np.random.default_rng(1)
    for _ in range(5):
        n = int(rng.integers(2, 40))
        residues = "".join(rng.choice(list(vocab.alphabet), size=n))
        sink = []
        encoder_forward(encoder, tokenize(SequenceRecord(id="x", residues=residues), vocab), attn_sink=sink)
        for matrix in sink:
            assert np.abs(matrix.sum(axis=1) - 1.0).max() < 1e-10


def test_rejects_overlong_input(vocab, encoder):
    from dualbind.seq_encoder import TokenizedSequence

    with pytest.raises(ValueError, match="max_len"):
        encoder.forward(np.zeros(100, dtype=np.intp))


def test_positional_sensitivity(vocab, encoder):
    a = tokenize(SequenceRecord(id="x", residues="ACDEF"), vocab)
    b = tokenize(SequenceRecord(id="x", residues="CADEF"), vocab)
    ha = encoder_forward(encoder, a).values
    hb = encoder_forward(encoder, b).values
    assert np.abs(ha - hb).max() > 0.0


def test_block_gradcheck_three_tokens(vocab):
    enc = TransformerEncoder(np.random.default_rng(7), vocab, dim=8, num_layers=1, heads=2, ff_hidden=16, max_len=16)
    block = enc.blocks[0]
    rng = np.random.default_rng(8)
    x = ad.parameter(rng.normal(size=(3, 8)))
    w = rng.normal(size=(3, 8))
    params = [x] + [t for _, t in block.named_params("b")]
    err = check_gradients(lambda: ad.sum_all(ad.mul(block.forward(x), ad.tensor(w))), params)
    assert err < 1e-4


# ---------------------------------------------------------------------------
# pooling


def test_pool_single_row_both_modes(vocab):
    rng = np.random.default_rng(2)
    h = ad.tensor(rng.normal(size=(1, 6)))
    pooler = AttentionPooler(rng, 6)
    assert np.array_equal(pool(h, "mean").values, h.values[0])
    assert np.abs(pool(h, "attention", pooler).values - h.values[0]).max() < 1e-15


def test_pool_identical_rows_both_modes(vocab):
    rng = np.random.default_rng(3)
    row = rng.normal(size=5)
    h = ad.tensor(np.tile(row, (4, 1)))
    pooler = AttentionPooler(rng, 5)
    assert np.abs(pool(h, "mean").values - row).max() < 1e-12
    assert np.abs(pool(h, "attention", pooler).values - row).max() < 1e-12


def test_pool_mean_hand_case():
    h = ad.tensor([[0.0, 2.0], [2.0, 0.0]])
    assert np.array_equal(pool(h, "mean").values, [1.0, 1.0])


# ---------------------------------------------------------------------------
# MLM masking


def test_mlm_mask_prob_zero_forces_one_target(vocab):
    ids = np.arange(10, dtype=np.intp)
    corrupted, targets = mlm_mask(ids, vocab, seed=4, mask_prob=0.0)
    assert len(targets) == 1
    untouched = np.delete(corrupted, targets[0])
    assert np.array_equal(untouched, np.delete(ids, targets[0]))


def test_mlm_mask_prob_one_all_masked_with_pure_mask_split(vocab):
    ids = np.arange(12, dtype=np.intp)
    corrupted, targets = mlm_mask(ids, vocab, seed=4, mask_prob=1.0, mask_frac=1.0, random_frac=0.0)
    assert len(targets) == 12
    assert np.all(corrupted == vocab.mask_id)


def test_mlm_mask_deterministic_in_seed(vocab):
    ids = np.arange(30, dtype=np.intp) % 20
    a = mlm_mask(ids, vocab, seed=123)
    b = mlm_mask(ids, vocab, seed=123)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = mlm_mask(ids, vocab, seed=124)
    assert not (np.array_equal(a[0], c[0]) and np.array_equal(a[1], c[1]))


# ---------------------------------------------------------------------------
# pretraining


def _random_corpus(vocab, rng, lines=16, length=24):
    return [np.asarray(rng.integers(0, len(vocab.alphabet), size=length), dtype=np.intp) for _ in range(lines)]


def test_untrained_loss_near_log_vocab(vocab):
    enc = TransformerEncoder(np.random.default_rng(10), vocab, dim=16, num_layers=1, heads=2, ff_hidden=32, max_len=32)
    head = MlmHead(np.random.default_rng(11), 16, vocab.size)
    rng = np.random.default_rng(12)
    batch = _random_corpus(vocab, rng)
    params = [t for _, t in enc.named_params("s")] + [t for _, t in head.named_params("m")]
    opt = AdamState(params, lr=0.0)  # measure without moving
    loss, _ = pretrain_step(enc, head, batch, params, opt, seed=13)
    assert abs(loss - np.log(vocab.size)) < 0.1 * np.log(vocab.size)


def test_pretrain_learns_periodic_corpus(vocab):
    enc = TransformerEncoder(np.random.default_rng(20), vocab, dim=32, num_layers=1, heads=4, ff_hidden=64, max_len=64)
    head = MlmHead(np.random.default_rng(21), 32, vocab.size)
    ids = np.asarray([vocab.encode(ch) for ch in "AC" * 16], dtype=np.intp)
    batch = [ids.copy() for _ in range(16)]
    params = [t for _, t in enc.named_params("s")] + [t for _, t in head.named_params("m")]
    opt = AdamState(params, lr=5e-3)
    accs = []
    for step in range(300):
        opt.lr = 5e-3 * min(1.0, (step + 1) / 50)  # warmup past the uniform-attention plateau
        loss, acc = pretrain_step(enc, head, batch, params, opt, seed=1000 + step)
        assert np.isfinite(loss) and loss >= 0.0
        accs.append(acc)
    assert np.mean(accs[-20:]) > 0.9
