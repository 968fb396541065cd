import numpy as np
import pytest

from noisysplit.errors import ConfigError, DimensionError, LabelError
from noisysplit.mlp import (
    MlpArchitecture, ParamSet, cross_entropy, features, forward, init_params, loss_and_grad, predict,
)


def numeric_grad(params, x, y, h=1e-6):
    flat = params.flatten()
    out = np.zeros_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        lu = cross_entropy(forward(ParamSet.from_flat(up, params), x), y)
        ld = cross_entropy(forward(ParamSet.from_flat(dn, params), x), y)
        out[i] = (lu - ld) / (2 * h)
    return out


@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_backprop_matches_finite_differences(rng, act):
    arch = MlpArchitecture(3, (5, 4), 3, act)
    p = init_params(arch, rng)
    p = ParamSet([(w, rng.normal(0, 0.1, b.shape)) for w, b in p.layers], act)
    x = rng.normal(size=(6, 3))
    y = np.array([0, 1, 2, 2, 1, 0])
    g = loss_and_grad(p, x, y).grads.flatten()
    num = numeric_grad(p, x, y)
    np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-8)


def test_loss_of_uniform_logits_is_log_k():
    arch = MlpArchitecture(4, (3,), 5)
    bg = loss_and_grad(ParamSet.zeros(arch), np.ones((2, 4)), np.array([0, 4]))
    assert bg.loss == pytest.approx(np.log(5))


def test_label_error_names_index():
    arch = MlpArchitecture(2, (3,), 3)
    with pytest.raises(LabelError, match="index 1"):
        loss_and_grad(ParamSet.zeros(arch), np.ones((3, 2)), np.array([0, 3, 1]))


def test_input_dim_mismatch():
    arch = MlpArchitecture(2, (3,), 3)
    with pytest.raises(DimensionError):
        forward(ParamSet.zeros(arch), np.ones((3, 5)))


def test_predict_ties_go_to_lowest_index():
    arch = MlpArchitecture(2, (3,), 4)
    assert list(predict(ParamSet.zeros(arch), np.ones((2, 2)))) == [0, 0]


def test_features_width_and_zero_params():
    arch = MlpArchitecture(5, (8, 16), 3)
    f = features(ParamSet.zeros(arch), np.ones((4, 5)))
    assert f.shape == (4, 16)
    assert not f.any()


def test_init_bounds_and_zero_bias(rng):
    arch = MlpArchitecture(24, (10,), 3)
    p = init_params(arch, rng)
    assert np.abs(p.layers[0][0]).max() <= np.sqrt(6 / 24)
    assert not p.layers[0][1].any()


def test_paramset_flatten_roundtrip_and_arithmetic(rng):
    p = init_params(MlpArchitecture(3, (4,), 2), rng)
    q = ParamSet.from_flat(p.flatten(), p)
    assert q.equals(p)
    assert (p + p - p).equals(p)
    assert p.size == 3 * 4 + 4 + 4 * 2 + 2
    with pytest.raises(DimensionError):
        p + ParamSet.zeros(MlpArchitecture(3, (5,), 2))


def test_bad_architecture():
    with pytest.raises(ConfigError):
        MlpArchitecture(3, (4,), 1)
    with pytest.raises(ConfigError):
        MlpArchitecture(3, (0,), 2)
    with pytest.raises(ConfigError):
        MlpArchitecture(3, (4,), 2, "gelu")
