import numpy as np
import pytest

from skelact.nn import functional as F
from skelact.nn.checkpoint import CheckpointError
from skelact.nn.gradcheck import numerical_grad, rel_error
from skelact.resnet import (
    VALID_DEPTHS, ResNetConfig, ResNetModel, build, downsample_shortcut,
    downsample_shortcut_backward, param_count,
)

# stem 3*16*9 + 2*16; stage1 3 blocks of 2 convs 16->16 with BN; stage2/3 first block
# widens with stride 2; head 64*8 + 8.
DEPTH20_PARAMS = (
    432 + 32
    + 3 * 2 * (16 * 16 * 9 + 32)
    + (16 * 32 * 9 + 64) + (32 * 32 * 9 + 64) + 2 * 2 * (32 * 32 * 9 + 64)
    + (32 * 64 * 9 + 128) + (64 * 64 * 9 + 128) + 2 * 2 * (64 * 64 * 9 + 128)
    + 64 * 8 + 8
)


def test_param_count_depth20_matches_derivation():
    assert DEPTH20_PARAMS == 269592
    assert param_count(build(ResNetConfig(20, 8))) == 269592


def test_param_count_grows_65_per_class():
    assert param_count(build(ResNetConfig(20, 9))) - param_count(build(ResNetConfig(20, 8))) == 65


@pytest.mark.parametrize("depth", VALID_DEPTHS)
def test_depth_laws(depth):
    model = build(ResNetConfig(depth))
    n = (depth - 2) // 6
    assert model.weighted_layer_count() == depth
    assert [len(s) for s in model.stages] == [n, n, n]
    shortcuts = [b.shortcut for b in model.blocks()]
    assert shortcuts.count("DownsampleZeroPad") == 2
    assert shortcuts[n] == shortcuts[2 * n] == "DownsampleZeroPad"


@pytest.mark.parametrize("depth", [0, 8, 21, 26, 1202])
def test_invalid_depth_rejected(depth):
    with pytest.raises(ValueError):
        ResNetConfig(depth)


def test_stage_output_shapes():
    model = build(ResNetConfig(20))
    x = np.random.default_rng(0).normal(size=(2, 3, 32, 32))
    logits, stages = model.forward(x, return_stages=True)
    assert logits.shape == (2, 8)
    assert [s.shape for s in stages] == [(2, 16, 32, 32), (2, 32, 16, 16), (2, 64, 8, 8)]
    with pytest.raises(ValueError):
        model.predict_logits(np.zeros((1, 3, 40, 40)))


def test_downsample_shortcut():
    x = np.arange(2 * 3 * 4 * 4, dtype=float).reshape(2, 3, 4, 4)
    y = downsample_shortcut(x)
    assert y.shape == (2, 6, 2, 2)
    np.testing.assert_array_equal(y[:, :3], x[:, :, ::2, ::2])
    assert not y[:, 3:].any()
    r = np.random.default_rng(1).normal(size=y.shape)
    dx = downsample_shortcut_backward(r, x.shape)
    assert rel_error(dx, numerical_grad(lambda: float((downsample_shortcut(x) * r).sum()), x)) < 1e-8


def test_initialisation():
    model = build(ResNetConfig(20, seed=3))
    w = model.stages[2][1].conv1.weight.value
    assert w.std() == pytest.approx(np.sqrt(2.0 / (64 * 9)), rel=0.05)
    assert np.abs(model.fc.weight.value).max() <= 1 / 8
    assert not model.fc.bias.value.any()
    for bn in model.batch_norms():
        assert (bn.state.gamma.value == 1).all() and not bn.state.beta.value.any()


def test_same_seed_same_weights():
    a = build(ResNetConfig(20, seed=5))
    b = build(ResNetConfig(20, seed=5))
    c = build(ResNetConfig(20, seed=6))
    assert a.to_bytes() == b.to_bytes() != c.to_bytes()


@pytest.mark.parametrize("training", [False, True])
def test_zeroed_residual_branches_give_identity(training):
    model = build(ResNetConfig(20, seed=1))
    rng = np.random.default_rng(2)
    for block in model.blocks():
        if block.stride != 1:
            continue
        for p in block.parameters():
            p.value[...] = 0
        x = np.abs(rng.normal(size=(2, block.conv1.weight.shape[1], 8, 8)))
        x[0, 0, 0, 0] = 0.0
        np.testing.assert_array_equal(block.forward(x, training), x)


def test_eval_output_independent_of_batch_size():
    model = build(ResNetConfig(20, seed=4), dtype=np.float64)
    x = np.random.default_rng(3).normal(size=(6, 3, 32, 32))
    full = model.predict_logits(x)
    parts = np.concatenate([model.predict_logits(x[i:i + 1]) for i in range(6)])
    assert np.abs(full - parts).max() <= 1e-6
    np.testing.assert_array_equal(model.predict_logits(x, batch_size=2), model.predict_logits(x))


def test_end_to_end_gradient_check():
    """Depth-20 network on 8x8 inputs (stage 3 runs at 2x2), float64, training mode."""
    model = build(ResNetConfig(20, num_classes=4, seed=7), dtype=np.float64)
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 3, 8, 8))
    labels = np.array([1, 3])

    def loss():
        return F.softmax_cross_entropy(model.forward(x, training=True), labels)[0]

    model.zero_grad()
    _, d, _ = F.softmax_cross_entropy(model.forward(x, training=True), labels)
    dx = model.backward(d)
    analytic, numeric = [], []
    for p in model.parameters():
        idx = rng.choice(p.value.size, size=min(3, p.value.size), replace=False)
        analytic.append(p.grad.reshape(-1)[idx])
        numeric.append(numerical_grad(loss, p.value, indices=idx))
    idx = rng.choice(x.size, size=20, replace=False)
    analytic.append(dx.reshape(-1)[idx])
    numeric.append(numerical_grad(loss, x, indices=idx))
    err = rel_error(np.concatenate(analytic), np.concatenate(numeric))
    assert err <= 1e-3, err


def test_checkpoint_round_trip(tmp_path):
    model = build(ResNetConfig(20, num_classes=5, seed=9))
    for bn in model.batch_norms():
        bn.state.running_mean = bn.state.running_mean + 0.25
    path = tmp_path / "m.ckpt"
    model.save(path, extra={"classes": [3, 1]})
    back = ResNetModel.load(path, expected=ResNetConfig(20, num_classes=5))
    assert back.extra == {"classes": [3, 1]}
    assert back.to_bytes(back.extra) == path.read_bytes()
    x = np.random.default_rng(0).normal(size=(2, 3, 32, 32))
    np.testing.assert_array_equal(back.predict_logits(x), model.predict_logits(x))
    with pytest.raises(CheckpointError):
        ResNetModel.load(path, expected=ResNetConfig(32, num_classes=5))
