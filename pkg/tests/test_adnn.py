import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from inelastic_nn import adnn as nn
from inelastic_nn.adnn import core as ad


def fd_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def scalar(fun):
    return lambda x: float(ad.value_of(fun(x)))


vec = arrays(np.float64, (5,), elements=st.floats(-3.0, 3.0))

UNARY = {
    "tanh": (ad.tanh, lambda x: 1 - np.tanh(x) ** 2),
    "exp": (ad.exp, np.exp),
    "sigmoid": (ad.sigmoid, lambda x: np.exp(-x) / (1 + np.exp(-x)) ** 2),
    "softplus": (ad.softplus, lambda x: 1 / (1 + np.exp(-x))),
    "square": (ad.square, lambda x: 2 * x),
}


@settings(max_examples=40, deadline=None)
@given(x=vec, name=st.sampled_from(sorted(UNARY)))
def test_elementwise_derivatives(x, name):
    f, df = UNARY[name]
    _, g = ad.value_and_grad(lambda v: ad.sum_(f(v)), x)
    np.testing.assert_allclose(g, df(x), rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(x=arrays(np.float64, (4,), elements=st.floats(0.1, 3.0)))
def test_log_and_power(x):
    _, g = ad.value_and_grad(lambda v: ad.sum_(ad.log(v) + v**3), x)
    np.testing.assert_allclose(g, 1 / x + 3 * x**2, rtol=1e-12)


def test_broadcasting_adjoints_sum_over_expanded_axes():
    a = np.arange(3.0).reshape(3, 1)
    b = np.array([[1.0, -2.0, 0.5, 4.0]])
    an, bn = ad.variable(a), ad.variable(b)
    out = ad.sum_((an + bn) * bn)
    ga, gb = ad.grad(out, [an, bn])
    np.testing.assert_allclose(ga, np.full((3, 1), b.sum()))
    np.testing.assert_allclose(gb, 2 * 3 * b + a.sum())


def test_matmul_and_indexing_against_differences():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((3, 4))
    x = rng.standard_normal((5, 3))

    def f(wv):
        h = ad.tanh(x @ wv)
        cols = ad.concatenate([h[:, 1:3], ad.reshape(h[:, 0], (-1, 1))], axis=1)
        return ad.mean(cols * cols) + ad.sum_(ad.transpose(h)[2])

    _, g = ad.value_and_grad(f, w)
    np.testing.assert_allclose(g, fd_grad(scalar(f), w), rtol=1e-7, atol=1e-10)


def test_scatter_is_adjoint_of_getitem():
    x = np.arange(6.0)
    xn = ad.variable(x[:2])
    full = ad.scatter(xn, slice(3, 5), (6,))
    np.testing.assert_array_equal(ad.value_of(full), [0, 0, 0, 0, 1, 0])
    g = ad.grad(ad.sum_(full * x), xn)
    np.testing.assert_array_equal(g, [3.0, 4.0])


def test_second_derivative_through_tape():
    x = np.array([-1.0, 0.2, 0.7])
    xn = ad.variable(x)
    g = ad.grad(ad.sum_(ad.tanh(xn)), xn, create_graph=True)
    h = ad.grad(ad.sum_(g), xn)
    t = np.tanh(x)
    np.testing.assert_allclose(h, -2 * t * (1 - t**2), rtol=1e-12)


def test_third_derivative_of_polynomial():
    xn = ad.variable(np.array([1.5]))
    d1 = ad.grad(ad.sum_(xn**4), xn, create_graph=True)
    d2 = ad.grad(ad.sum_(d1), xn, create_graph=True)
    d3 = ad.grad(ad.sum_(d2), xn)
    np.testing.assert_allclose(d3, [24 * 1.5])


def test_mixed_input_parameter_derivative():
    # d/dtheta of (d net / dx) is what the potential-based losses differentiate
    spec = nn.NetSpec([2, 6, 1], ["tanh"])
    rng = np.random.default_rng(1)
    theta = rng.standard_normal(spec.n_params)
    x = rng.standard_normal((4, 2))

    def dnet_dx(th):
        xn = ad.variable(x)
        out = nn.fnn_forward(spec, th, xn)
        return ad.grad(ad.sum_(out), xn, create_graph=True)

    def f(th):
        return ad.sum_(ad.square(dnet_dx(th)))

    _, g = ad.value_and_grad(f, theta)
    np.testing.assert_allclose(g, fd_grad(scalar(f), theta), rtol=1e-6, atol=1e-9)


def test_kinks_have_one_sided_masks_and_flat_curvature():
    xn = ad.variable(np.array([-1.0, 2.0]))
    g = ad.grad(ad.sum_(ad.relu(xn) + 3 * ad.abs_(xn)), xn, create_graph=True)
    np.testing.assert_array_equal(ad.value_of(g), [-3.0, 4.0])
    np.testing.assert_array_equal(ad.grad(ad.sum_(g), xn), [0.0, 0.0])


def test_unrelated_input_gets_zero_gradient():
    a, b = ad.variable(np.ones(3)), ad.variable(np.ones(2))
    ga, gb = ad.grad(ad.sum_(a * 2.0), [a, b])
    np.testing.assert_array_equal(ga, 2.0)
    np.testing.assert_array_equal(gb, 0.0)


def test_vector_output_needs_seed():
    xn = ad.variable(np.ones(3))
    with pytest.raises(ValueError):
        ad.grad(xn * 2.0, xn)
    np.testing.assert_array_equal(ad.grad(xn * 2.0, xn, seed=np.array([1.0, 0.0, 2.0])), [2, 0, 4])


# --- networks -----------------------------------------------------------------


def test_netspec_validation():
    assert nn.NetSpec([3, 5, 1], ["tanh"]).n_params == 3 * 5 + 5 + 5 + 1
    with pytest.raises(nn.ConfigError):
        nn.NetSpec([3, 5, 1], [])
    with pytest.raises(nn.ConfigError):
        nn.NetSpec([3, 5, 1], ["gelu"])
    with pytest.raises(nn.ConfigError):
        nn.NetSpec([3, 5, 1], ["tanh"], weight_mode="nonneg_all")
    with pytest.raises(nn.ConfigError):
        nn.NetSpec([3, 0, 1], ["tanh"])


def test_input_width_mismatch():
    spec = nn.NetSpec([3, 4, 1], ["tanh"])
    with pytest.raises(nn.ConfigError):
        nn.fnn_forward(spec, np.zeros(spec.n_params), np.zeros((2, 2)))


def test_set_layer_roundtrip_through_reparameterization():
    spec = nn.NetSpec([2, 3, 1], ["softplus"], weight_mode="nonneg_all")
    net = nn.Dense(spec)
    theta = np.zeros(spec.n_params)
    w = np.array([[0.5], [1.5], [2.0]])
    net.set_layer(theta, 1, w, [0.3])
    w1, b1 = net.materialize(theta)[1]
    np.testing.assert_allclose(ad.value_of(w1), w, rtol=1e-12)
    np.testing.assert_allclose(ad.value_of(b1), [[0.3]], rtol=1e-12)


def _convex_net(seed, n_in=2):
    spec = nn.NetSpec([n_in, 8, 8, 1], ["softplus", "softplus"], weight_mode="nonneg_all")
    theta = np.random.default_rng(seed).normal(0.0, 1.5, spec.n_params)
    return spec, theta


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), x=arrays(np.float64, (2, 2), elements=st.floats(-5, 5)), lam=st.floats(0, 1))
def test_convex_network_is_convex(seed, x, lam):
    spec, theta = _convex_net(seed)
    f = lambda z: float(ad.value_of(nn.icnn_forward(spec, theta, z))[0, 0])
    mid = lam * x[0] + (1 - lam) * x[1]
    assert f(mid) <= lam * f(x[0]) + (1 - lam) * f(x[1]) + 1e-9 * (1 + abs(f(x[0])) + abs(f(x[1])))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), x=arrays(np.float64, (6, 3), elements=st.floats(-50, 50)))
def test_positive_network_is_non_negative(seed, x):
    spec = nn.NetSpec([3, 7, 1], ["softplus"], weight_mode="nonneg_output", bias_mode="nonneg")
    theta = np.random.default_rng(seed).normal(0.0, 3.0, spec.n_params)
    assert np.all(ad.value_of(nn.positive_net_forward(spec, theta, x)) >= 0.0)


def test_constrained_forwards_check_their_spec():
    with pytest.raises(nn.ConfigError):
        nn.icnn_forward(nn.NetSpec([2, 3, 1], ["tanh"]), np.zeros(13), np.zeros((1, 2)))
    with pytest.raises(nn.ConfigError):
        nn.positive_net_forward(nn.NetSpec([2, 3, 1], ["tanh"]), np.zeros(13), np.zeros((1, 2)))


def _numpy_lstm_step(w, b, h, c, x):
    z = np.concatenate([x, h], axis=1) @ w + b
    n = h.shape[1]
    sg = lambda v: 1 / (1 + np.exp(-v))
    i, f, g, o = sg(z[:, :n]), sg(z[:, n:2 * n]), np.tanh(z[:, 2 * n:3 * n]), sg(z[:, 3 * n:])
    c2 = f * c + i * g
    return o * np.tanh(c2), c2


def test_lstm_step_matches_numpy_reference():
    spec = nn.LstmSpec(2, 3)
    rng = np.random.default_rng(2)
    theta = rng.standard_normal(spec.n_params)
    x = rng.standard_normal((4, 2))
    h0, c0 = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    h, c = nn.lstm_step(spec, theta, (h0, c0), x)
    nw = 5 * 12
    hr, cr = _numpy_lstm_step(theta[:nw].reshape(5, 12), theta[nw:], h0, c0, x)
    np.testing.assert_allclose(ad.value_of(h), hr, rtol=1e-12)
    np.testing.assert_allclose(ad.value_of(c), cr, rtol=1e-12)


def test_lstm_unrolled_gradient():
    spec = nn.LstmSpec(1, 2)
    theta = np.random.default_rng(3).normal(0, 0.5, spec.n_params)
    xs = np.linspace(-1, 1, 5).reshape(5, 1, 1)

    def f(th):
        cell = nn.Lstm(spec)
        wb = cell.materialize(th)
        h, c = cell.zero_state(1)
        for x in xs:
            h, c = cell.step(wb, h, c, x)
        return ad.sum_(h * h)

    _, g = ad.value_and_grad(f, theta)
    np.testing.assert_allclose(g, fd_grad(scalar(f), theta), rtol=1e-6, atol=1e-10)


def test_param_pack_offsets(tmp_path):
    pack = nn.ParamPack()
    a = pack.add("a", nn.Dense, nn.NetSpec([2, 3, 1], ["tanh"]))
    b = pack.add("b", nn.Lstm, nn.LstmSpec(1, 2))
    assert a.offset == 0 and b.offset == a.n_params
    assert pack.size == a.n_params + b.n_params
    theta = pack.init(np.random.default_rng(0))
    sl = pack.block_slice("b")
    assert sl.stop == pack.size
    fname = tmp_path / "ck.json"
    nn.save_checkpoint(fname, {"k": 1}, theta)
    header, back = nn.load_checkpoint(fname)
    assert header == {"k": 1}
    np.testing.assert_array_equal(back, theta)
