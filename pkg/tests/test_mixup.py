import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixupe import nn
from mixupe import tensor as T
from mixupe.mixup import (
    BetaParams,
    expected_a_lambda,
    loss_h,
    mix_batch,
    mixupe_loss,
    q_exact,
    q_hat,
    q_tangent,
    regularizer_R,
    sample_beta,
    sample_mixture_lambda,
)
from mixupe.tensor import Tensor

from conftest import central_fd, rel_err


def identity_model(d=2):
    layer = nn.DenseLayer(Tensor(np.eye(d), requires_grad=True), None, "identity")
    return nn.MlpModel([layer], nn.Architecture(d, (), d, homogeneous=True))


def small_net(seed=0, act="tanh", hom=False):
    return nn.init_model(nn.Architecture(4, (6,), 3, act, hom), seed)


# -- lambda sampling ------------------------------------------------------


def test_beta_uniform_mean():
    lam = sample_beta(BetaParams(1, 1), np.random.default_rng(0), 100_000)
    assert abs(lam.mean() - 0.5) < 0.01


def test_beta_small_shape_moments():
    lam = sample_beta(BetaParams(0.2, 0.2), np.random.default_rng(1), 100_000)
    assert abs(lam.mean() - 0.5) < 0.01
    assert abs(lam.var() - 0.04 / (0.16 * 1.4)) < 0.01
    assert np.all((lam > 0) & (lam < 1))


def test_beta_tiny_shapes_stay_open_interval():
    lam = sample_beta(BetaParams(1e-6, 1e-6), np.random.default_rng(2), 10_000)
    assert np.all((lam > 0) & (lam < 1))


def test_beta_seeded():
    p = BetaParams(0.4, 0.4)
    a = sample_beta(p, np.random.default_rng(7), 10)
    b = sample_beta(p, np.random.default_rng(7), 10)
    assert a.tobytes() == b.tobytes()


def test_expected_a_lambda_values():
    assert expected_a_lambda(BetaParams(1, 1)) == pytest.approx(1 / 3, abs=1e-15)
    assert expected_a_lambda(BetaParams(0.2, 0.2)) == pytest.approx(0.2 / 1.4, abs=1e-15)
    assert expected_a_lambda(BetaParams(1e-9, 1e-9)) < 1e-8
    for a in (0.1, 1.0, 3.0):
        assert expected_a_lambda(BetaParams.symmetric(a)) == pytest.approx(1 - (a + 1) / (2 * a + 1))


def test_expected_a_lambda_mc():
    lam = sample_mixture_lambda(BetaParams(0.2, 0.2), np.random.default_rng(3), 1_000_000)
    assert abs((1 - lam).mean() - 0.2 / 1.4) < 0.001


# -- mixing ---------------------------------------------------------------


def test_mix_lambda_one_is_identity(rng):
    x, y = rng.normal(size=(5, 3)), np.eye(5)
    b = mix_batch(x, y, 1.0, perm=[4, 3, 2, 1, 0])
    np.testing.assert_array_equal(b.x_mixed.data, x)
    np.testing.assert_array_equal(b.y_mixed.data, y)


def test_mix_half():
    b = mix_batch(np.eye(2), np.eye(2), 0.5, perm=[1, 0])
    np.testing.assert_array_equal(b.x_mixed.data, np.full((2, 2), 0.5))


def test_mix_rejects_bad_input():
    with pytest.raises(T.ShapeError):
        mix_batch(np.ones((3, 2)), np.ones((2, 2)), 0.5, perm=[0, 1, 2])
    with pytest.raises(ValueError):
        mix_batch(np.ones((3, 2)), np.ones((3, 2)), 0.5, perm=[0, 0, 1])


# -- losses ---------------------------------------------------------------


def test_loss_h_examples():
    assert loss_h(Tensor([[0.0, 0.0]]), [[1.0, 0.0]]).item() == pytest.approx(np.log(2), rel=1e-15)
    assert loss_h(Tensor([[10.0, -10.0]]), [[1.0, 0.0]]).item() == pytest.approx(np.log1p(np.exp(-20)), rel=1e-9)


def test_loss_h_is_cross_entropy(rng):
    f = rng.normal(size=(20, 4)) * 3
    y = np.eye(4)[rng.integers(0, 4, 20)]
    p = np.exp(f - f.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    ce = -np.mean(np.sum(y * np.log(p), axis=1))
    assert abs(loss_h(Tensor(f), y).item() - ce) < 1e-12


def test_loss_h_sigmoid_head(rng):
    f = rng.normal(size=(10, 1))
    y = rng.integers(0, 2, (10, 1)).astype(float)
    s = 1 / (1 + np.exp(-f))
    bce = -np.mean(y * np.log(s) + (1 - y) * np.log(1 - s))
    assert loss_h(Tensor(f), y, "sigmoid").item() == pytest.approx(bce, rel=1e-12)


def test_loss_h_head_checks():
    with pytest.raises(T.ShapeError):
        loss_h(Tensor([[1.0, 2.0]]), [[1.0, 0.0]], "sigmoid")
    with pytest.raises(T.ShapeError):
        loss_h(Tensor([[1.0, 2.0]]), [[1.0, 0.0, 0.0]])


# -- first-order term -----------------------------------------------------


def test_q_exact_identity_model():
    q = q_exact(identity_model(), [1.0, 0.0], [1.0, 0.0], [0.0, 0.0])
    assert q == pytest.approx(0.268941, abs=1e-6)


def test_q_exact_constant_model_is_zero(rng):
    m = small_net()
    m.layers[-1].weight.data[:] = 0.0
    assert q_exact(m, rng.normal(size=4), [1, 0, 0], np.zeros(4)) == 0.0


def test_q_exact_zero_residual(rng):
    m = small_net()
    x = rng.normal(size=(1, 4))
    f = m.predict(x)
    y = np.exp(f) / np.exp(f).sum()
    assert abs(q_exact(m, x, y, np.zeros(4))) < 1e-15


def test_q_hat_examples():
    assert q_hat(Tensor([[1.0, 0.0]]), [[1.0, 0.0]]).item() == pytest.approx(0.268941, abs=1e-6)
    f = np.array([[0.3, -1.2, 2.0]])
    y = np.exp(f) / np.exp(f).sum()
    assert abs(q_hat(Tensor(f), y).item()) < 1e-15
    assert q_hat(Tensor([[0.0, 0.0]]), [[0.0, 1.0]]).item() == 0.0


def test_q_tangent_matches_q_exact(rng):
    m = small_net(2)
    x = rng.normal(size=(5, 4))
    y = np.eye(3)[rng.integers(0, 3, 5)]
    mean = x.mean(0, keepdims=True)
    qt = q_tangent(m, x, y, mean).data[:, 0]
    qe = [q_exact(m, x[i], y[i], mean) for i in range(5)]
    np.testing.assert_allclose(qt, qe, rtol=1e-10, atol=1e-14)


def test_q_hat_equals_q_on_homogeneous_net(rng):
    m = small_net(1, "relu", hom=True)
    x = rng.normal(size=(6, 4))
    x -= x.mean(0)
    y = np.eye(3)[rng.integers(0, 3, 6)]
    qh = q_hat(m(Tensor(x)), y).data[:, 0]
    qe = [q_exact(m, x[i], y[i], np.zeros(4)) for i in range(6)]
    np.testing.assert_allclose(qh, qe, atol=1e-12)


def test_R_zero_when_predictions_exact(rng):
    m = small_net()
    x = rng.normal(size=(4, 4))
    f = m.predict(x)
    y = np.exp(f) / np.exp(f).sum(1, keepdims=True)
    assert abs(regularizer_R(m, x, y, BetaParams(1, 1)).item()) < 1e-15


def test_R_vanishes_for_tiny_alpha(rng):
    m = small_net()
    x = rng.normal(size=(4, 4))
    y = np.eye(3)[[0, 1, 2, 0]]
    r = regularizer_R(m, x, y, BetaParams(1e-6, 1e-6)).item()
    assert 0 <= r < 1e-5


def test_R_modes_agree_on_homogeneous_zero_mean(rng):
    m = small_net(4, "relu", hom=True)
    x = rng.normal(size=(8, 4))
    x -= x.mean(0)
    y = np.eye(3)[rng.integers(0, 3, 8)]
    p = BetaParams(1, 1)
    ra = regularizer_R(m, x, y, p).item()
    re = regularizer_R(m, x, y, p, "exact", np.zeros((1, 4))).item()
    assert ra == pytest.approx(re, rel=1e-12)


# -- objective ------------------------------------------------------------


def test_eta_zero_is_mixup_bitwise(rng):
    m = small_net()
    x = rng.normal(size=(6, 4))
    y = np.eye(3)[rng.integers(0, 3, 6)]
    p = BetaParams(1, 1)
    total, bd = mixupe_loss(m, x, y, p, 0.0, lam=0.7, perm=[5, 4, 3, 2, 1, 0])
    mixed = mix_batch(x, y, 0.7, perm=[5, 4, 3, 2, 1, 0])
    ref = loss_h(m(mixed.x_mixed), mixed.y_mixed).item()
    assert total.item() == ref and bd.eta_hat == 1.0


def test_lambda_one_is_erm(rng):
    m = small_net()
    x = rng.normal(size=(6, 4))
    y = np.eye(3)[rng.integers(0, 3, 6)]
    total, _ = mixupe_loss(m, x, y, BetaParams(1, 1), 0.0, lam=1.0, perm=np.arange(6)[::-1])
    assert total.item() == loss_h(m(Tensor(x)), y).item()


def test_eta_hat_preserves_magnitude(rng):
    m = small_net()
    x = rng.normal(size=(6, 4))
    y = np.eye(3)[rng.integers(0, 3, 6)]
    total, bd = mixupe_loss(m, x, y, BetaParams(1, 1), 0.5, lam=0.6, perm=np.arange(6)[::-1])
    assert abs(total.item()) == pytest.approx(abs(bd.l_mix), rel=1e-12)
    assert bd.r_term > 0 and bd.eta_hat < 1


def test_gradient_holds_eta_hat_constant(rng):
    m = small_net(3)
    x = rng.normal(size=(5, 4))
    y = np.eye(3)[rng.integers(0, 3, 5)]
    p, eta, perm = BetaParams(1, 1), 0.7, [1, 2, 3, 4, 0]
    _, bd = mixupe_loss(m, x, y, p, eta, lam=0.4, perm=perm)
    flat0 = m.flat_parameters()

    def objective(flat):
        m.set_flat_parameters(flat)
        with T.no_grad():
            _, b = mixupe_loss(m, x, y, p, eta, lam=0.4, perm=perm)
        return bd.eta_hat * (b.l_mix + eta * b.r_term)

    fd = central_fd(objective, flat0)
    m.set_flat_parameters(flat0)
    total, _ = mixupe_loss(m, x, y, p, eta, lam=0.4, perm=perm)
    T.backward(total)
    grad = np.concatenate([q.grad.ravel() for q in m.parameters()])
    assert rel_err(grad, fd) < 1e-6


@settings(max_examples=40, deadline=None)
@given(
    lam=st.floats(0.0, 1.0),
    seed=st.integers(0, 10_000),
    eta=st.floats(0.0, 5.0),
    m=st.integers(2, 8),
)
def test_objective_properties(lam, seed, eta, m):
    r = np.random.default_rng(seed)
    model = small_net(seed % 7)
    x = r.normal(size=(m, 4))
    y = np.eye(3)[r.integers(0, 3, m)]
    total, bd = mixupe_loss(model, x, y, BetaParams(0.5, 0.5), eta, lam=lam, perm=r.permutation(m))
    assert bd.l_mix >= 0 and bd.r_term >= 0
    assert 0 < bd.eta_hat <= 1
    assert abs(total.item()) == pytest.approx(bd.l_mix, rel=1e-12, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), lam=st.floats(0.0, 1.0))
def test_mixed_rows_stay_in_hull(seed, lam):
    r = np.random.default_rng(seed)
    x = r.normal(size=(5, 3))
    b = mix_batch(x, np.eye(5), lam, rng=r)
    assert np.all(b.x_mixed.data <= x.max(0) + 1e-12) and np.all(b.x_mixed.data >= x.min(0) - 1e-12)
    np.testing.assert_allclose(b.y_mixed.data.sum(1), 1.0, rtol=1e-14)
