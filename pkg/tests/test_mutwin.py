import numpy as np
import pytest

from dualbind import autodiff as ad
from dualbind.mutwin import (
    BiLstm,
    Conv1dLayer,
    LocalGlobalMerge,
    MutationWindowEncoder,
    bilstm_forward,
    combine_local_global,
    conv_forward,
    extract_window,
)

from helpers import check_gradients

PAD = 20


def test_window_left_boundary():
    tokens = np.arange(10, dtype=np.intp)
    win = extract_window(tokens, t=0, k=2, pad_id=PAD)
    assert list(win.token_ids) == [PAD, PAD, 0, 1, 2]
    assert list(win.padding_mask) == [True, True, False, False, False]


def test_window_interior_verbatim():
    tokens = np.arange(10, dtype=np.intp)
    win = extract_window(tokens, t=5, k=2, pad_id=PAD)
    assert list(win.token_ids) == [3, 4, 5, 6, 7]
    assert not win.padding_mask.any()


def test_window_length_invariant_sweep():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        t = int(rng.integers(0, n))
        k = int(rng.integers(1, 12))
        win = extract_window(np.arange(n, dtype=np.intp), t, k, PAD)
        assert len(win.token_ids) == 2 * k + 1


def test_window_rejects_out_of_range_center():
    with pytest.raises(ValueError):
        extract_window(np.arange(5, dtype=np.intp), t=5, k=2, pad_id=PAD)


# ---------------------------------------------------------------------------
# conv


def test_conv_zero_input_zero_bias():
    layer = Conv1dLayer(np.random.default_rng(0), c_in=4, c_out=3)
    out = conv_forward(layer, ad.tensor(np.zeros((5, 4))))
    assert np.array_equal(out.values, np.zeros((5, 3)))


def test_conv_identity_tap_kernel():
    layer = Conv1dLayer(np.random.default_rng(0), c_in=1, c_out=1, kernel_width=3)
    layer.kernels.values[...] = np.array([[[0.0, 1.0, 0.0]]])
    layer.bias.values[...] = 0.0
    out = layer.pre_activation(ad.tensor([[1.0], [2.0], [3.0]]))
    assert np.array_equal(out.values, [[1.0], [2.0], [3.0]])


def test_conv_negative_bias_saturates_relu():
    layer = Conv1dLayer(np.random.default_rng(1), c_in=2, c_out=3)
    layer.bias.values[...] = -1e6
    out = conv_forward(layer, ad.tensor(np.random.default_rng(2).normal(size=(7, 2))))
    assert np.array_equal(out.values, np.zeros((7, 3)))


def test_conv_rejects_width_mismatch():
    layer = Conv1dLayer(np.random.default_rng(0), c_in=4, c_out=2)
    with pytest.raises(ad.ShapeMismatchError):
        conv_forward(layer, ad.tensor(np.zeros((5, 3))))


def test_conv_pre_activation_is_linear_in_input():
    rng = np.random.default_rng(3)
    layer = Conv1dLayer(rng, c_in=3, c_out=4)
    layer.bias.values[...] = 0.0
    x = rng.normal(size=(6, 3))
    one = layer.pre_activation(ad.tensor(x)).values
    three = layer.pre_activation(ad.tensor(3.0 * x)).values
    assert np.abs(three - 3.0 * one).max() < 1e-10


# ---------------------------------------------------------------------------
# BiLSTM


def test_bilstm_zero_weights_zero_output():
    cells = BiLstm(np.random.default_rng(0), c_in=3, hidden=4)
    for t in (cells.fwd_w_ih, cells.fwd_w_hh, cells.fwd_bias, cells.bwd_w_ih, cells.bwd_w_hh, cells.bwd_bias):
        t.values[...] = 0.0
    out = bilstm_forward(cells, ad.tensor(np.random.default_rng(1).normal(size=(5, 3))))
    assert np.array_equal(out.values, np.zeros(8))


def test_bilstm_length_one_directions_see_same_input():
    rng = np.random.default_rng(2)
    cells = BiLstm(rng, c_in=3, hidden=4)
    # copy forward parameters into the backward cell: halves must agree on T=1
    cells.bwd_w_ih.values[...] = cells.fwd_w_ih.values
    cells.bwd_w_hh.values[...] = cells.fwd_w_hh.values
    cells.bwd_bias.values[...] = cells.fwd_bias.values
    out = bilstm_forward(cells, ad.tensor(rng.normal(size=(1, 3))))
    assert np.abs(out.values[:4] - out.values[4:]).max() < 1e-15


def test_bilstm_direction_symmetry():
    rng = np.random.default_rng(3)
    cells = BiLstm(rng, c_in=2, hidden=3)
    x = rng.normal(size=(6, 2))
    out = bilstm_forward(cells, ad.tensor(x)).values

    swapped = BiLstm(rng, c_in=2, hidden=3)
    swapped.fwd_w_ih.values[...] = cells.bwd_w_ih.values
    swapped.fwd_w_hh.values[...] = cells.bwd_w_hh.values
    swapped.fwd_bias.values[...] = cells.bwd_bias.values
    swapped.bwd_w_ih.values[...] = cells.fwd_w_ih.values
    swapped.bwd_w_hh.values[...] = cells.fwd_w_hh.values
    swapped.bwd_bias.values[...] = cells.fwd_bias.values
    reversed_out = bilstm_forward(swapped, ad.tensor(x[::-1].copy())).values

    assert np.abs(out[:3] - reversed_out[3:]).max() < 1e-12
    assert np.abs(out[3:] - reversed_out[:3]).max() < 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_bilstm_gradcheck_all_gates(seed):
    rng = np.random.default_rng(seed)
    cells = BiLstm(rng, c_in=2, hidden=3)
    x = ad.parameter(rng.normal(size=(3, 2)))
    w = rng.normal(size=6)
    params = [x] + [t for _, t in cells.named_params("c")]
    err = check_gradients(lambda: ad.sum_all(ad.mul(bilstm_forward(cells, x), ad.tensor(w))), params)
    assert err < 1e-4


# ---------------------------------------------------------------------------
# local/global merge


def test_combine_passthrough_construction():
    rng = np.random.default_rng(4)
    merge = LocalGlobalMerge(rng, local_dim=3, global_dim=4, out_dim=4)
    merge.projection.weight.values[...] = 0.0
    merge.projection.weight.values[3:, :] = np.eye(4)  # select the global half
    merge.projection.bias.values[...] = 0.0
    h_seq = ad.tensor(rng.normal(size=4))
    out = combine_local_global(merge, ad.tensor(np.zeros(3)), h_seq)
    assert np.array_equal(out.values, np.maximum(h_seq.values, 0.0))


def test_combine_output_width_fixed():
    rng = np.random.default_rng(5)
    merge = LocalGlobalMerge(rng, local_dim=8, global_dim=6, out_dim=6)
    out = combine_local_global(merge, ad.tensor(rng.normal(size=8)), ad.tensor(rng.normal(size=6)))
    assert out.shape == (6,)


def test_combine_gradient_reaches_both_inputs():
    rng = np.random.default_rng(6)
    merge = LocalGlobalMerge(rng, local_dim=3, global_dim=3, out_dim=3)
    h_local = ad.parameter(rng.normal(size=3))
    h_seq = ad.parameter(rng.normal(size=3))
    loss = ad.sum_all(ad.mul(combine_local_global(merge, h_local, h_seq), ad.tensor(rng.normal(size=3))))
    ad.backward(loss)
    assert np.abs(h_local.grad).max() > 0
    assert np.abs(h_seq.grad).max() > 0


# ---------------------------------------------------------------------------
# end-to-end branch gradient


@pytest.mark.parametrize("seed", range(3))
def test_conv_bilstm_merge_end_to_end_gradcheck(seed):
    rng = np.random.default_rng(seed + 10)
    enc = MutationWindowEncoder(rng, embed_dim=4, half_width=2, conv_channels=3, lstm_hidden=2)
    window = ad.parameter(rng.normal(size=(5, 4)))
    h_seq = ad.parameter(rng.normal(size=4))
    w = rng.normal(size=4)
    params = [window, h_seq] + [t for _, t in enc.named_params("m")]
    err = check_gradients(lambda: ad.sum_all(ad.mul(enc.forward(window, h_seq), ad.tensor(w))), params)
    assert err < 1e-4
