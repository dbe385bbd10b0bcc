import numpy as np
import pytest
from scipy import stats

from fipinn.distributions import Gaussian, GaussianMixture, UniformBox
from fipinn.domains import DomainSpec, box
from fipinn.failure import (
    LimitState,
    SaisConfig,
    SupportViolation,
    causal_limit_state,
    lsf_eval,
    pf_is,
    pf_mc,
    residual_limit_state,
    sais,
)
from fipinn.nn import ConfigurationError, init_network
from fipinn.problems import BoundaryCondition, Operator, PdeProblem, Residual, get_problem
from fipinn.training import CausalConfig

SQUARE = box(2)
PRIOR = UniformBox.on(SQUARE)
CENTER = np.array([0.5, 0.5])
DISK = LimitState.analytic(lambda X: 0.5 - np.linalg.norm(X - CENTER, axis=1))
HALF = LimitState.analytic(lambda X: X[:, 0])
NEVER = LimitState(0.1, lambda X: np.zeros(len(X)))


def test_lsf_eval_examples():
    assert lsf_eval(LimitState(0.1, lambda X: np.full(len(X), 0.2)), [0.0, 0.0]) == pytest.approx(0.1, abs=1e-16)
    assert lsf_eval(LimitState(0.1, lambda X: np.full(len(X), 0.1)), [0.0, 0.0]) == 0.0
    assert lsf_eval(NEVER, [0.3, 0.3]) == -0.1
    with pytest.raises(ValueError):
        LimitState(0.0, lambda X: X)


def test_pf_mc_basic():
    assert pf_mc(NEVER, PRIOR, 500, 0).value == 0.0
    n = 4000
    assert abs(pf_mc(HALF, PRIOR, n, 1).value - 0.5) < 3 * np.sqrt(0.25 / n)
    always = LimitState.analytic(lambda X: np.ones(len(X)))
    assert pf_mc(always, PRIOR, 1, 2).value == 1.0


def test_pf_mc_in_unit_interval():
    for s in range(20):
        v = pf_mc(DISK, PRIOR, 50, s).value
        assert 0.0 <= v <= 1.0


def test_pf_is_with_prior_proposal_equals_mc():
    for s in range(5):
        assert pf_is(DISK, PRIOR, PRIOR, 700, s).value == pf_mc(DISK, PRIOR, 700, s).value


def test_pf_is_normal_tail():
    tail = LimitState.analytic(lambda X: X[:, 0] - 1.0)
    est = pf_is(tail, Gaussian([0.0], [[1.0]]), Gaussian([2.0], [[1.0]]), 2000, 0)
    assert abs(est.value - stats.norm.cdf(-1.0)) < 3 * est.std_error
    assert pf_is(NEVER, PRIOR, PRIOR, 100, 0).value == 0.0


class HalfBlindProposal(UniformBox):
    """Samples the whole square but reports zero density on its left half."""

    def density(self, X):
        return np.where(np.atleast_2d(X)[:, 0] < 0, 0.0, super().density(X))


def test_pf_is_support_violation():
    with pytest.raises(SupportViolation):
        pf_is(LimitState.analytic(lambda X: -X[:, 0]), PRIOR, HalfBlindProposal([-1, -1], [1, 1]), 400, 0)


def test_pf_is_weight_flag():
    from fipinn.distributions import TruncatedGaussian
    tail = LimitState.analytic(lambda X: X[:, 0] - 0.5)
    # a mis-normalized proposal inflates every weight by 1e7
    bad = TruncatedGaussian([0.0], [[1.0]], DomainSpec("box", ((-np.inf, np.inf),)), z=1e7)
    est = pf_is(tail, Gaussian([0.0], [[1.0]]), bad, 200, 0)
    assert "weight_above_1e6" in est.flags and est.max_weight > 1e6
    ok = pf_is(tail, Gaussian([0.0], [[1.0]]), Gaussian([1.0], [[1.0]]), 200, 0)
    assert ok.flags == ()


def test_sais_config():
    assert SaisConfig().n_p == 30
    with pytest.raises(ConfigurationError):
        SaisConfig(n1=10, p0=0.1)
    with pytest.raises(ConfigurationError):
        SaisConfig(p0=1.0)


def test_sais_zero_residual():
    res = sais(NEVER, PRIOR, SQUARE, SaisConfig(max_rounds=3), seed=0)
    assert res.p_hat == 0.0 and len(res.adaptive_points) == 0
    assert res.terminated_by == "max_iters" and res.iterations_used == 3


def test_sais_disk_estimate_and_points():
    res = sais(DISK, PRIOR, SQUARE, SaisConfig(), seed=3)
    assert abs(res.p_hat - np.pi / 16) < 3 * res.std_error
    assert res.terminated_by == "enough_failures"
    assert len(res.adaptive_points) > 0
    assert np.all(DISK.g(res.adaptive_points) > 0)
    assert np.isfinite(res.p_hat) and res.p_hat >= 0


def test_sais_targeting_monotone_on_small_disk():
    small = LimitState.analytic(lambda X: 0.1 - np.linalg.norm(X - CENTER, axis=1))
    fractions = []
    for s in range(5):
        res = sais(small, PRIOR, SQUARE, SaisConfig(), seed=s)
        assert res.iterations_used >= 2
        fractions.append([r.fail_fraction for r in res.rounds[:2]] + [res.final_fail_fraction])
    med = np.median(np.array(fractions), axis=0)
    assert np.all(np.diff(med) >= 0)


def test_sais_trace_csv(tmp_path):
    small = LimitState.analytic(lambda X: 0.1 - np.linalg.norm(X - CENTER, axis=1))
    res = sais(small, PRIOR, SQUARE, SaisConfig(), seed=0)
    res.write_trace(tmp_path / "sais.csv")
    lines = (tmp_path / "sais.csv").read_text().splitlines()
    assert lines[0] == "round,N_eta,mu_0,mu_1,sigma_diag_0,sigma_diag_1"
    assert len(lines) == 1 + res.iterations_used
    assert lines[1].startswith("1,")


def test_sais_gmm_two_disks():
    c2 = -CENTER
    two = LimitState.analytic(
        lambda X: 0.1 - np.minimum(np.linalg.norm(X - CENTER, axis=1), np.linalg.norm(X - c2, axis=1)))
    res = sais(two, PRIOR, SQUARE, SaisConfig(model="gmm", n_components=2), seed=1)
    assert isinstance(res.final_proposal, GaussianMixture)
    means = res.final_proposal.means
    assert min(np.linalg.norm(means - CENTER, axis=1)) < 0.25
    assert min(np.linalg.norm(means - c2, axis=1)) < 0.25
    exact = 2 * np.pi * 0.01 / 4
    assert abs(res.p_hat - exact) < 4 * res.std_error


def test_sais_unbounded_gaussian_prior_disk():
    prior = Gaussian([0.0, 0.0], np.eye(2))
    c = np.array([2.0, 0.0])
    disk = LimitState.analytic(lambda X: 0.5 - np.linalg.norm(X - c, axis=1))
    exact = stats.ncx2.cdf(0.25, df=2, nc=4.0)
    unbounded = DomainSpec("unbounded", ((-np.inf, np.inf),) * 2)
    hits = sum(abs(r.p_hat - exact) < 3 * r.std_error
               for r in (sais(disk, prior, unbounded, SaisConfig(), seed=s) for s in range(20)))
    assert hits >= 17


def constant_residual_problem():
    dom = DomainSpec("box", ((-1.0, 1.0), (0.0, 1.0)), False, ((1, 0),))
    op = Operator((), lambda X, u, G, S: Residual(np.ones(len(X)) + 0 * u, du=np.zeros_like(u)))
    bc = BoundaryCondition("ic", "dirichlet", None, target=lambda X: np.zeros(len(X)))
    return PdeProblem("const", 2, dom, op, (bc,), UniformBox.on(dom), None, lambda X: 0 * X[:, 0],
                      time_axis=1, time_interval=(0.0, 1.0))


def test_causal_limit_state_hand_example():
    p = constant_residual_problem()
    net = init_network([2, 3, 1], 0)
    coll = np.column_stack([np.zeros(10), np.linspace(0.0, 1.0, 10)])
    ls = causal_limit_state(net, p, CausalConfig(2, 1.0), 0.5, coll)
    X = np.array([[0.0, 0.2], [0.0, 0.8]])
    assert np.allclose(ls.g(X), [0.5, np.exp(-1.0) - 0.5], rtol=1e-15)
    assert ls.g(X)[0] > 0 > ls.g(X)[1]
    huge = causal_limit_state(net, p, CausalConfig(2, 1e4), 0.5, coll)
    assert huge.g(X)[1] == pytest.approx(-0.5)


def test_causal_limit_state_eps_zero_matches_plain():
    p = get_problem("allen_cahn_1d")
    net = init_network([2, 6, 1], 0)
    X = p.prior.sample(50, np.random.default_rng(0))
    plain = residual_limit_state(net, p, 0.05)
    causal = causal_limit_state(net, p, CausalConfig(4, 0.0), 0.05, X)
    assert np.array_equal(plain.g(X), causal.g(X))
    with pytest.raises(ValueError):
        causal_limit_state(net, get_problem("poisson_peak_2d"), CausalConfig(2, 1.0), 0.1, X)
