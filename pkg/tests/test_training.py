import numpy as np
import pytest

from fipinn.nn import Network, init_network
from fipinn.problems import BoundaryCondition, Operator, PdeProblem, Residual, get_problem
from fipinn.distributions import UniformBox
from fipinn.domains import box
from fipinn.training import (
    CausalConfig,
    LossHistory,
    TrainingSet,
    causal_loss,
    causal_weights,
    initial_training_set,
    loss,
    loss_and_grad,
    train_adam,
    train_lbfgs,
)


def regression_problem(target):
    """``r = u - target(x)`` on [-1, 1]: a least-squares fit disguised as a PDE."""
    dom = box(1)
    op = Operator((), lambda X, u, G, S: Residual(u - target(X), du=np.ones_like(u)))
    bc = BoundaryCondition("ends", "dirichlet", lambda n, rng: rng.choice([-1.0, 1.0], (n, 1)), target=target)
    return PdeProblem("regression", 1, dom, op, (bc,), UniformBox.on(dom),
                      lambda n, rng: rng.uniform(-1, 1, (n, 1)), lambda X: np.zeros(len(X)))


@pytest.fixture
def peak_setup():
    p = get_problem("poisson_peak_2d")
    ts = initial_training_set(p, 60, 20, np.random.default_rng(0))
    return p, ts, init_network([2, 8, 8, 1], 0)


def test_loss_components(peak_setup):
    p, ts, net = peak_setup
    rep = loss(net, p, ts, lam=2.5)
    r = p.residual(net, ts.collocation)
    b = p.boundary_residual(net, ts.boundary, ts.boundary_kind)
    assert rep.interior == pytest.approx(np.mean(r ** 2), rel=1e-14)
    assert rep.boundary == pytest.approx(np.mean(b ** 2), rel=1e-14)
    assert abs(rep.total - (rep.interior + 2.5 * rep.boundary)) <= 1e-12 * rep.total
    assert loss(net, p, ts, lam=0.0).total == rep.interior


def test_loss_duplication_invariance(peak_setup):
    p, ts, net = peak_setup
    dup = TrainingSet(np.vstack([ts.collocation] * 2), np.vstack([ts.boundary] * 2),
                      np.concatenate([ts.boundary_kind] * 2))
    a, b = loss(net, p, ts), loss(net, p, dup)
    for f in ("total", "interior", "boundary"):
        assert abs(getattr(a, f) - getattr(b, f)) <= 1e-12 * abs(getattr(a, f))


def test_loss_rejects_empty(peak_setup):
    p, ts, net = peak_setup
    with pytest.raises(ValueError):
        loss(net, p, TrainingSet(np.empty((0, 2)), ts.boundary))


def test_surrogate_has_small_interior_loss():
    # a network fitted to the smooth offset bump has a small Poisson residual
    p = get_problem("poisson_highdim", d=1)
    ts = initial_training_set(p, 200, 2, np.random.default_rng(0))
    net, _ = train_adam(init_network([1, 16, 16, 1], 0), p, ts, 3000, 3e-3)
    net, h = train_lbfgs(net, p, ts, 300)
    assert loss(net, p, ts).interior < 1e-3 * loss(init_network([1, 16, 16, 1], 0), p, ts).interior


def test_gradient_matches_fd(peak_setup):
    p, ts, net = peak_setup
    _, g = loss_and_grad(net, p, ts, lam=1.5)
    rng = np.random.default_rng(1)
    for i in rng.choice(net.n_params, 15, replace=False):
        e = np.zeros(net.n_params)
        e[i] = 1e-6
        fd = (loss(net.with_params(net.params + e), p, ts, 1.5).total
              - loss(net.with_params(net.params - e), p, ts, 1.5).total) / 2e-6
        assert abs(fd - g[i]) <= 1e-5 * max(abs(fd), 1e-2)


def test_causal_weights_examples():
    assert np.array_equal(causal_weights([0.0, 0.0, 0.0], 5.0), [1.0, 1.0, 1.0])
    assert np.array_equal(causal_weights([3.0, 1.0, 2.0], 0.0), [1.0, 1.0, 1.0])
    assert np.array_equal(causal_weights([1.0, 1.0, 1.0], 1.0), [1.0, np.exp(-1.0), np.exp(-2.0)])
    w = causal_weights(np.random.default_rng(0).uniform(0, 1, 20), 3.0)
    assert np.all(np.diff(w) <= 0) and np.all((w > 0) & (w <= 1))
    with pytest.raises(ValueError):
        causal_weights([1.0], -1.0)
    with pytest.raises(ValueError):
        CausalConfig(0, 1.0)


def hand_problem(values):
    """Residual equals a fixed per-point value, identified by the x coordinate."""
    lookup = dict(values)
    dom = box(2, 0.0, 1.0)
    op = Operator((), lambda X, u, G, S: Residual(np.array([lookup[x] for x in X[:, 0]]) + 0 * u,
                                                   du=np.zeros_like(u)))
    bc = BoundaryCondition("b", "dirichlet", None, target=lambda X: np.zeros(len(X)))
    return PdeProblem("hand", 2, dom, op, (bc,), UniformBox.on(dom), None, lambda X: 0 * X[:, 0],
                      time_axis=1, time_interval=(0.0, 1.0))


def test_causal_loss_hand_example():
    # slab 1 (t < 0.5): residuals 1, 3 -> L1 = 5 ; slab 2: residuals 2, 0 -> L2 = 2
    p = hand_problem({0.1: 1.0, 0.2: 3.0, 0.3: 2.0, 0.4: 0.0})
    X = np.array([[0.1, 0.1], [0.2, 0.4], [0.3, 0.5], [0.4, 1.0]])
    net = init_network([2, 2, 1], 0)
    ts = TrainingSet(X, [[0.0, 0.0]])
    rep = causal_loss(net, p, ts, CausalConfig(2, 0.1))
    assert rep.interior == pytest.approx((5.0 + np.exp(-0.5) * 2.0) / 2, rel=1e-15)
    assert causal_loss(net, p, ts, CausalConfig(2, 0.0)).interior == pytest.approx(3.5, rel=1e-15)
    assert causal_loss(net, p, ts, CausalConfig(1, 7.0)).interior == loss(net, p, ts).interior
    # five slabs: t=0.1 -> 0, t=0.4 and 0.5 -> 2, t=1 -> 4; slabs 1 and 3 are empty and contribute 0
    assert causal_loss(net, p, ts, CausalConfig(5, 0.0)).interior == pytest.approx((1.0 + 6.5 + 0.0) / 5, rel=1e-15)


def test_causal_gradient_matches_fd():
    p = get_problem("allen_cahn_1d")
    ts = initial_training_set(p, 80, 30, np.random.default_rng(0))
    net = init_network([2, 8, 8, 1], 2)
    cfg = CausalConfig(4, 2.0)
    # weights are frozen in the gradient: compare against FD with weights held fixed
    _, g = loss_and_grad(net, p, ts, causal=cfg)
    from fipinn.training import slab_index, slab_losses
    slabs = slab_index(ts.collocation[:, 1], 4, (0.0, 1.0))
    w = causal_weights(slab_losses(p.residual(net, ts.collocation), slabs, 4)[0], 2.0)

    def frozen(params):
        n = net.with_params(params)
        L, _ = slab_losses(p.residual(n, ts.collocation), slabs, 4)
        return np.dot(w, L) / 4 + loss(n, p, ts).boundary

    for i in np.random.default_rng(1).choice(net.n_params, 10, replace=False):
        e = np.zeros(net.n_params)
        e[i] = 1e-6
        fd = (frozen(net.params + e) - frozen(net.params - e)) / 2e-6
        assert abs(fd - g[i]) <= 1e-6 * max(abs(fd), 1e-3)


def test_causal_requires_time(peak_setup):
    p, ts, net = peak_setup
    with pytest.raises(ValueError):
        causal_loss(net, p, ts, CausalConfig(2, 1.0))


def test_adam_zero_steps_and_bad_lr(peak_setup):
    p, ts, net = peak_setup
    out, hist = train_adam(net, p, ts, 0, 1e-3)
    assert np.array_equal(out.params, net.params) and hist.steps == [0]
    with pytest.raises(ValueError):
        train_adam(net, p, ts, 1, 0.0)


def test_adam_zero_gradient_keeps_params():
    p = regression_problem(lambda X: np.zeros(len(X)))
    net = Network((1, 2, 1), np.zeros(7))
    ts = TrainingSet([[0.3], [-0.2]], [[1.0]])
    out, _ = train_adam(net, p, ts, 5, 1e-2)
    assert np.array_equal(out.params, net.params)


def test_adam_decreases_constant_fit():
    p = regression_problem(lambda X: np.full(len(X), 0.7))
    ts = initial_training_set(p, 50, 4, np.random.default_rng(0))
    out, hist = train_adam(init_network([1, 1, 1], 3), p, ts, 100, 1e-2, history_every=1)
    t = np.array(hist.total)
    assert t[-1] < t[0]
    assert np.all(t[1:] <= 1.5 * t[:-1])


def test_adam_deterministic(peak_setup):
    p, ts, net = peak_setup
    a, _ = train_adam(net, p, ts, 20, 1e-3, seed=4)
    b, _ = train_adam(net, p, ts, 20, 1e-3, seed=4)
    assert np.array_equal(a.params, b.params)


def test_lbfgs_least_squares():
    # u = w * tanh(a x) ... use a linear model: widths [1, 1] is an affine map u = w x + b
    p = regression_problem(lambda X: 2.0 * X[:, 0] - 0.5)
    rng = np.random.default_rng(0)
    ts = TrainingSet(rng.uniform(-1, 1, (40, 1)), [[-1.0], [1.0]])
    net = Network((1, 1), np.array([0.1, 0.0]))
    out, hist = train_lbfgs(net, p, ts, 50)
    _, g = loss_and_grad(out, p, ts)
    assert np.linalg.norm(g) < 1e-8
    assert np.allclose(out.params, [2.0, -0.5], atol=1e-8)
    assert np.all(np.diff(hist.total) <= 0)
    same, h0 = train_lbfgs(net, p, ts, 0)
    assert np.array_equal(same.params, net.params)


def test_lbfgs_descent_on_pinn(peak_setup):
    p, ts, net = peak_setup
    out, hist = train_lbfgs(net, p, ts, 30)
    assert np.all(np.diff(hist.total) <= 0)
    assert hist.status in ("max_iters", "converged", "line_search_failed")


def test_history_csv(tmp_path):
    h = LossHistory()
    from fipinn.training import LossReport
    h.append(0, LossReport(3.0, 1.0, 2.0))
    h.to_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines() == ["step,total,interior,boundary", "0,3.0,1.0,2.0"]


def test_training_set_provenance():
    ts = TrainingSet(np.zeros((3, 2)), np.zeros((1, 2)))
    ts2 = ts.enriched(np.ones((2, 2)), "sais")
    assert ts2.counts() == {"initial": 3, "uniform": 0, "rar": 0, "sais": 2}
    assert ts.n_collocation == 3
    with pytest.raises(ValueError):
        ts.enriched(np.ones((1, 2)), "bogus")
