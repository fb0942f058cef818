import json

import numpy as np
import pytest

from dualbind import autodiff as ad
from dualbind.fusion import FusionMlp, compute_metrics, fuse_predict, training_loss

from helpers import check_gradients


def test_fuse_zero_inputs_deterministic():
    mlp = FusionMlp(np.random.default_rng(0), in_dim=8)
    zero = ad.tensor(np.zeros(4))
    a = fuse_predict(mlp, zero, zero).item()
    b = fuse_predict(mlp, ad.tensor(np.zeros(4)), ad.tensor(np.zeros(4))).item()
    assert a == b


def test_fuse_rejects_width_mismatch():
    mlp = FusionMlp(np.random.default_rng(0), in_dim=8)
    with pytest.raises(ad.ShapeMismatchError):
        fuse_predict(mlp, ad.tensor(np.zeros(4)), ad.tensor(np.zeros(5)))


def test_fuse_gradient_reaches_both_modalities():
    rng = np.random.default_rng(1)
    mlp = FusionMlp(rng, in_dim=8)
    h_c = ad.parameter(rng.normal(size=4))
    h_s = ad.parameter(rng.normal(size=4))
    ad.backward(fuse_predict(mlp, h_c, h_s))
    assert np.abs(h_c.grad).max() > 0
    assert np.abs(h_s.grad).max() > 0


def test_fuse_swapped_concat_with_permuted_weights():
    rng = np.random.default_rng(2)
    mlp = FusionMlp(rng, in_dim=8)
    h_c = ad.tensor(rng.normal(size=4))
    h_s = ad.tensor(rng.normal(size=4))
    base = fuse_predict(mlp, h_c, h_s).item()

    swapped = FusionMlp(np.random.default_rng(99), in_dim=8)
    for src, dst in ((mlp.fc1, swapped.fc1), (mlp.fc2, swapped.fc2), (mlp.fc3, swapped.fc3)):
        dst.weight.values[...] = src.weight.values
        dst.bias.values[...] = src.bias.values
    # swap the first-layer weight rows to match the swapped concatenation
    swapped.fc1.weight.values[...] = np.concatenate([mlp.fc1.weight.values[4:], mlp.fc1.weight.values[:4]])
    assert fuse_predict(swapped, h_s, h_c).item() == base


@pytest.mark.parametrize("seed", range(3))
def test_fusion_mlp_gradcheck(seed):
    rng = np.random.default_rng(seed + 5)
    mlp = FusionMlp(rng, in_dim=8)
    h_c = ad.parameter(rng.normal(size=4))
    h_s = ad.parameter(rng.normal(size=4))
    params = [h_c, h_s] + [t for _, t in mlp.named_params("f")]
    err = check_gradients(lambda: fuse_predict(mlp, h_c, h_s), params)
    assert err < 1e-6


# ---------------------------------------------------------------------------
# training loss


def test_training_loss_perfect_predictions():
    preds = ad.tensor([1.0, 2.0, 3.0])
    loss = training_loss(preds, ad.tensor([1.0, 2.0, 3.0]), [], lam=0.0)
    assert loss.total_value == 0.0


def test_training_loss_hand_case():
    loss = training_loss(ad.tensor([1.0, 2.0, 4.0]), ad.tensor([1.0, 2.0, 3.0]), [], lam=0.0)
    assert abs(loss.mse_value - 1.0 / 3.0) < 1e-15


def test_training_loss_lambda_zero_ignores_geo():
    preds = ad.tensor([1.0, 2.0])
    targets = ad.tensor([0.0, 0.0])
    small = training_loss(preds, targets, [ad.tensor(np.asarray(1.0))], lam=0.0)
    large = training_loss(preds, targets, [ad.tensor(np.asarray(1e6))], lam=0.0)
    assert small.total_value == large.total_value == small.mse_value


def test_training_loss_matches_mse_bitwise_at_lambda_zero():
    rng = np.random.default_rng(0)
    p = rng.normal(size=10)
    t = rng.normal(size=10)
    direct = ad.mse(ad.tensor(p), ad.tensor(t)).item()
    assert training_loss(ad.tensor(p), ad.tensor(t), [], lam=0.0).total_value == direct


def test_training_loss_combines_geo_term():
    loss = training_loss(ad.tensor([1.0]), ad.tensor([0.0]), [ad.tensor(np.asarray(2.0)), ad.tensor(np.asarray(4.0))], lam=0.5)
    assert loss.geo_value == 3.0
    assert loss.total_value == 1.0 + 0.5 * 3.0


def test_training_loss_rejects_empty():
    with pytest.raises((ValueError, ad.ShapeMismatchError)):
        training_loss(ad.tensor(np.zeros(0)), ad.tensor(np.zeros(0)), [], lam=0.0)


# ---------------------------------------------------------------------------
# metrics


def test_metrics_perfect():
    m = compute_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (m.mae, m.rmse, m.r2) == (0.0, 0.0, 1.0)


def test_metrics_hand_case():
    m = compute_metrics([1.0, 2.0, 4.0], [1.0, 2.0, 3.0])
    assert abs(m.mae - 1.0 / 3.0) < 1e-12
    assert abs(m.rmse - 3.0**-0.5) < 1e-12
    assert abs(m.r2 - 0.5) < 1e-12


def test_metrics_mean_predictor_r2_zero():
    targets = [1.0, 2.0, 3.0, 10.0]
    mean = sum(targets) / len(targets)
    m = compute_metrics([mean] * 4, targets)
    assert abs(m.r2) < 1e-12


def test_metrics_constant_targets_nan_with_warning():
    with pytest.warns(UserWarning, match="constant targets"):
        m = compute_metrics([1.0, 2.0], [5.0, 5.0])
    assert np.isnan(m.r2)


def test_metrics_rejects_single_sample():
    with pytest.raises(ValueError):
        compute_metrics([1.0], [1.0])


def test_rmse_dominates_mae_on_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 30))
        m = compute_metrics(rng.normal(size=n), rng.normal(size=n))
        assert m.rmse >= m.mae >= 0.0
        assert m.r2 <= 1.0


def test_metrics_report_formats():
    m = compute_metrics([1.0, 2.0, 4.0], [1.0, 2.0, 3.0])
    obj = json.loads(m.to_json("full"))
    assert set(obj) == {"model", "mae", "rmse", "r2", "n"}
    assert obj["model"] == "full" and obj["n"] == 3
    table = m.to_table("full")
    lines = table.splitlines()
    assert lines[0].split() == ["Model", "MAE", "RMSE", "R^2", "N"]
    assert lines[1].startswith("full")
