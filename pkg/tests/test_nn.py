import numpy as np
import pytest

from helpers import check_input, check_params, numeric_grad, rel_error
from twistsr.nn import (
    CriticConfig,
    GeneratorConfig,
    ParameterStore,
    Tensor,
    adam_step,
    conv2d,
    conv2d_backward,
    conv2d_forward,
    critic_forward,
    generator_forward,
    init_critic,
    init_generator,
    leaky_relu,
    no_grad,
    rrdb_forward,
    weight_decay_gradient,
    zero_generator,
)
from twistsr.nn import functional as F
from twistsr.nn.optim import clip_, weight_norm_sq

TINY = GeneratorConfig(base_features=4, rrdb_blocks=1, growth_channels=2)


def _loop_conv(x, w, b, stride, pad):
    bsz, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((bsz, cout, ho, wo))
    for n in range(bsz):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = b[o]
                    for c in range(cin):
                        for u in range(k):
                            for v in range(k):
                                acc += w[o, c, u, v] * xp[n, c, i * stride + u, j * stride + v]
                    out[n, o, i, j] = acc
    return out


# -- conv ---------------------------------------------------------------------

def test_delta_kernel_is_identity(rng):
    x = rng.normal(size=(2, 3, 5, 4))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    out, _ = conv2d_forward(x, w, np.zeros(3))
    assert np.array_equal(out, x)


def test_ones_kernel_interior_sum():
    x = np.full((1, 1, 5, 5), 2.5)
    out, _ = conv2d_forward(x, np.ones((1, 1, 3, 3)), np.zeros(1))
    assert np.allclose(out[0, 0, 1:-1, 1:-1], 22.5)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loop_reference(rng, stride):
    x = rng.normal(size=(1, 2, 4, 4))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out, _ = conv2d_forward(x, w, b, stride=stride, padding=1)
    assert np.max(np.abs(out - _loop_conv(x, w, b, stride, 1))) < 1e-10


def test_conv_channel_mismatch(rng):
    with pytest.raises(ValueError):
        conv2d_forward(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), None)


def test_conv_weight_gradient_fd(rng):
    x = rng.normal(size=(1, 1, 4, 4))
    w = rng.normal(size=(2, 1, 3, 3))
    b = rng.normal(size=2)
    proj = rng.normal(size=(1, 2, 4, 4))
    out, cache = conv2d_forward(x, w, b)
    gx, gw, gb = conv2d_backward(proj, cache)
    f = lambda: float(np.sum(conv2d_forward(x, w, b)[0] * proj))
    assert rel_error(gw, numeric_grad(f, w)) < 1e-4
    assert rel_error(gx, numeric_grad(f, x)) < 1e-4
    assert np.allclose(gb, proj.sum(axis=(0, 2, 3)))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_input_gradient_fd(rng, stride):
    w = Tensor(rng.normal(size=(3, 2, 3, 3)))
    b = Tensor(rng.normal(size=3))
    x = rng.normal(size=(2, 2, 6, 5))
    proj_shape = conv2d(Tensor(x), w, b, stride=stride).shape
    proj = rng.normal(size=proj_shape)
    assert check_input(lambda t: conv2d(t, w, b, stride=stride), x, proj) < 1e-6


def test_conv_zero_grad_out(rng):
    _, cache = conv2d_forward(rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(2, 2, 3, 3)), np.zeros(2))
    gx, gw, gb = conv2d_backward(np.zeros((1, 2, 4, 4)), cache)
    assert not gx.any() and not gw.any() and not gb.any()


def test_conv_backward_without_forward():
    with pytest.raises(RuntimeError):
        conv2d_backward(np.zeros((1, 1, 2, 2)), None)


def test_shifted_and_im2col_paths_agree(rng):
    from twistsr.nn.functional import _im2col

    x = rng.normal(size=(2, 3, 7, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    fast, _ = conv2d_forward(x, w, b)
    cols, ho, wo = _im2col(x, 3, 1, 1)
    slow = (w.reshape(4, -1) @ cols).reshape(4, 2, ho, wo).transpose(1, 0, 2, 3) + b[None, :, None, None] \
        if cols.shape[0] == 27 else None
    ref = _loop_conv(x, w, b, 1, 1)
    assert np.max(np.abs(fast - ref)) < 1e-10
    if slow is not None:
        assert np.max(np.abs(slow - ref)) < 1e-10


# -- leaky relu -----------------------------------------------------------------

def test_leaky_relu_values():
    assert leaky_relu(Tensor(np.array([-2.0, 3.0])), 0.0).data.tolist() == [0.0, 3.0]
    assert leaky_relu(Tensor(np.array([-5.0, 5.0])), 0.2).data.tolist() == [-1.0, 5.0]


def test_leaky_relu_gradient(rng):
    x = rng.normal(size=(3, 7))
    x[np.abs(x) < 1e-3] = 0.5
    proj = rng.normal(size=x.shape)
    assert check_input(lambda t: leaky_relu(t, 0.2), x, proj) < 1e-6


# -- blocks and networks ----------------------------------------------------------

def test_rrdb_zero_params_identity(rng):
    p = zero_generator(TINY, dtype=np.float64)
    x = rng.normal(size=(1, 4, 5, 5))
    assert np.array_equal(rrdb_forward(Tensor(x), p, 0, TINY).data, x)


def test_rrdb_beta_zero_identity(rng):
    cfg = GeneratorConfig(base_features=4, rrdb_blocks=1, growth_channels=2, residual_scale=0.0)
    p = init_generator(cfg, dtype=np.float64, residual_gain=1.0)
    x = rng.normal(size=(1, 4, 5, 5))
    assert np.array_equal(rrdb_forward(Tensor(x), p, 0, cfg).data, x)


def test_rrdb_channel_check():
    p = zero_generator(TINY)
    with pytest.raises(ValueError):
        rrdb_forward(Tensor(np.zeros((1, 3, 4, 4))), p, 0, TINY)


def test_rrdb_gradient_fd(rng):
    p = init_generator(TINY, seed=1, dtype=np.float64, residual_gain=1.0)
    x = rng.normal(size=(1, 4, 5, 5))
    proj = rng.normal(size=x.shape)
    names = [n for n in p.names() if n.startswith("rrdb.0.")]
    assert check_params(lambda: rrdb_forward(Tensor(x), p, 0, TINY), p, proj, names) < 1e-3
    assert check_input(lambda t: rrdb_forward(t, p, 0, TINY), x, proj) < 1e-3


def test_generator_zero_identity(rng):
    cfg = GeneratorConfig()
    x = rng.normal(size=(2, 4, 9, 7)) * 100
    out = generator_forward(Tensor(x), cfg, zero_generator(cfg, dtype=np.float64))
    assert np.max(np.abs(out.data - x)) == 0.0


def test_generator_shape():
    cfg = GeneratorConfig()
    out = generator_forward(Tensor(np.zeros((1, 4, 64, 64), np.float32)), cfg, init_generator(cfg))
    assert out.shape == (1, 4, 64, 64)
    assert out.data.dtype == np.float32


def test_generator_input_check():
    with pytest.raises(ValueError):
        generator_forward(Tensor(np.zeros((1, 3, 8, 8))), TINY, zero_generator(TINY))


def test_generator_gradient_fd(rng):
    p = init_generator(TINY, seed=2, dtype=np.float64, residual_gain=1.0)
    x = rng.normal(size=(1, 4, 5, 5))
    target = rng.normal(size=x.shape)

    def build():
        return F.squared_error_sum(generator_forward(Tensor(x), TINY, p), target)

    assert check_params(build, p, np.array(1.0)) < 1e-3


def test_generator_config_validation():
    assert GeneratorConfig(base_features=0).validate()
    with pytest.raises(ValueError):
        GeneratorConfig.from_dict({"bogus": 1})
    cfg = GeneratorConfig(growth_channels=4)
    assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg


def test_ll_passthrough_init(rng):
    p = init_generator(TINY, dtype=np.float64, residual_gain=0.0)
    x = rng.normal(size=(1, 4, 6, 6))
    out = generator_forward(Tensor(x), TINY, p).data
    assert np.allclose(out[:, 0], 2 * x[:, 0], atol=1e-12)
    assert np.allclose(out[:, 1:], x[:, 1:], atol=1e-12)
    plain = init_generator(TINY, dtype=np.float64, residual_gain=0.0, ll_passthrough=False)
    assert np.array_equal(generator_forward(Tensor(x), TINY, plain).data, x)


def test_init_is_seeded():
    a, b = init_generator(TINY, seed=3), init_generator(TINY, seed=3)
    assert all(np.array_equal(a[n].data, b[n].data) for n in a)
    c = init_generator(TINY, seed=4)
    assert not np.array_equal(a["head.weight"].data, c["head.weight"].data)
    assert not any(a[n].data.any() for n in a if n.endswith("bias"))


CRITIC = CriticConfig(in_channels=1, features=2, layers=2)


def test_critic_zero_params(rng):
    p = init_critic(CRITIC, dtype=np.float64)
    p.zero_()
    assert np.array_equal(critic_forward(Tensor(rng.normal(size=(2, 1, 8, 8))), CRITIC, p).data, [0, 0])


def test_critic_batch_shape(rng):
    p = init_critic(CRITIC)
    assert critic_forward(Tensor(rng.normal(size=(3, 1, 16, 16)).astype(np.float32)), CRITIC, p).shape == (3,)


def test_critic_gradient_fd(rng):
    p = init_critic(CRITIC, seed=5, dtype=np.float64)
    x = rng.normal(size=(2, 1, 8, 8))
    proj = rng.normal(size=2)
    assert check_params(lambda: critic_forward(Tensor(x), CRITIC, p), p, proj) < 1e-3
    assert check_input(lambda t: critic_forward(t, CRITIC, p), x, proj) < 1e-3


# -- autodiff plumbing ---------------------------------------------------------------

def test_no_grad_records_nothing(rng):
    w = Tensor(rng.normal(size=(1, 1, 3, 3)), requires_grad=True)
    with no_grad():
        out = conv2d(Tensor(rng.normal(size=(1, 1, 4, 4))), w)
    assert out._parents == () or not out._parents
    assert not out.requires_grad


def test_shared_input_accumulates(rng):
    x = Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True)
    y = F.add(x, F.scale(x, 3.0))
    y.backward(np.ones(y.shape))
    assert np.allclose(x.grad, 4.0)


def test_concat_and_idwt_gradients(rng):
    a = rng.normal(size=(1, 2, 2, 2))
    b = rng.normal(size=(1, 2, 2, 2))
    bt = Tensor(b)
    proj = rng.normal(size=(1, 1, 4, 4))
    assert check_input(lambda t: F.idwt2d(F.concat([t, bt], axis=1)), a, proj) < 1e-7


# -- optimizer ----------------------------------------------------------------------

def _single(value=0.0, grad=None, name="w.weight"):
    p = ParameterStore()
    t = p.add(name, np.array([value]))
    t.grad = None if grad is None else np.array([grad])
    return p, t


def test_adam_first_step():
    p, t = _single(0.0, 1.0)
    adam_step(p, 0.1)
    assert t.data[0] == pytest.approx(-0.1, abs=1e-6)


def test_adam_zero_gradient():
    p, t = _single(1.5, 0.0)
    adam_step(p, 0.1)
    assert t.data[0] == 1.5 and p.step == 1


def test_adam_monotone():
    p, t = _single(0.0, 2.0)
    adam_step(p, 0.01)
    w1 = t.data[0]
    t.grad = np.array([2.0])
    adam_step(p, 0.01)
    assert 0.0 > w1 > t.data[0]


def test_adam_missing_gradient():
    p, _ = _single(0.0, None)
    with pytest.raises(RuntimeError):
        adam_step(p, 0.1)


def test_weight_decay():
    p, t = _single(3.0, 0.0)
    weight_decay_gradient(p, 0.0)
    assert t.grad[0] == 0.0
    weight_decay_gradient(p, 0.5)
    assert t.grad[0] == 3.0
    q, b = _single(3.0, 0.0, name="w.bias")
    weight_decay_gradient(q, 0.5)
    assert b.grad[0] == 0.0


def test_objective_gradient_with_decay(rng):
    lam = 0.05
    p = init_generator(TINY, seed=6, dtype=np.float64, residual_gain=1.0)
    x = rng.normal(size=(1, 4, 4, 4))
    target = rng.normal(size=x.shape)

    def value():
        d = generator_forward(Tensor(x), TINY, p).data - target
        return float(np.sum(d * d)) + lam * weight_norm_sq(p)

    p.zero_grad()
    F.squared_error_sum(generator_forward(Tensor(x), TINY, p), target).backward()
    weight_decay_gradient(p, lam)
    worst = 0.0
    for name in ("head.weight", "tail.weight", "tail.bias", "rrdb.0.dense.1.conv.2.weight"):
        worst = max(worst, rel_error(p[name].grad, numeric_grad(value, p[name].data)))
    assert worst < 1e-3


def test_clip():
    p, t = _single(0.5, 0.0)
    clip_(p, 0.01)
    assert t.data[0] == 0.01


def test_parameter_store():
    p = init_generator(TINY)
    with pytest.raises(KeyError):
        p.add("head.weight", np.zeros(1))
    q = p.astype(np.float64)
    assert q["head.weight"].data.dtype == np.float64
    arrays = p.state_arrays()
    r = zero_generator(TINY)
    r.load_arrays(arrays)
    assert all(np.array_equal(r[n].data, p[n].data) for n in p)
    with pytest.raises((KeyError, ValueError)):
        r.load_arrays({"head.weight": np.zeros(3)})
