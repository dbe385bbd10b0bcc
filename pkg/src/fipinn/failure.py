"""Limit-state functions and failure-probability estimators (MC, IS and SAIS)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distributions import (
    GaussianMixture,
    Proposal,
    UniformBox,
    _rng,
    fit_gmm_em,
    fit_moments,
    fit_weighted_center,
    gaussian_on,
)
from .domains import DomainSpec
from .nn import ConfigurationError, Network
from .problems import PdeProblem
from .training import CausalConfig, causal_weights, slab_index, slab_losses

WEIGHT_WARNING = 1e6


class SupportViolation(RuntimeError):
    """The proposal put zero density on a failing point that the prior can reach."""


@dataclass(frozen=True)
class LimitState:
    """``g(x) = Q(x) - eps_r``; ``residual_fn`` maps a batch ``(N, d)`` to ``Q`` values.

    ``lsf`` optionally supplies ``g`` directly (analytic test functions); it
    then takes precedence over ``residual_fn - eps_r``.
    """

    eps_r: float
    residual_fn: Callable[[np.ndarray], np.ndarray] | None = None
    lsf: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not self.eps_r > 0:
            raise ValueError("eps_r must be positive")
        if self.residual_fn is None and self.lsf is None:
            raise ValueError("need residual_fn or lsf")

    @classmethod
    def analytic(cls, g: Callable[[np.ndarray], np.ndarray]) -> "LimitState":
        return cls(1.0, None, g)

    def g(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            return np.empty(0)
        if self.lsf is not None:
            return np.asarray(self.lsf(X), dtype=np.float64)
        return np.asarray(self.residual_fn(X), dtype=np.float64) - self.eps_r

    def fails(self, X) -> np.ndarray:
        return self.g(X) > 0


def lsf_eval(ls: LimitState, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    out = ls.g(x)
    return float(out[0]) if x.ndim == 1 else out


def residual_limit_state(net: Network, problem: PdeProblem, eps_r: float) -> LimitState:
    """LSF built on the absolute PDE residual of ``net``."""
    return LimitState(eps_r, lambda X: np.abs(problem.residual(net, X)))


def causal_limit_state(net: Network, problem: PdeProblem, cfg: CausalConfig, eps_r: float,
                       collocation: np.ndarray) -> LimitState:
    """LSF on ``w_i |r(x, t)|`` where ``i`` is the time slab of ``t``.

    The slab weights come from the current slab losses on ``collocation``
    and are frozen inside the returned LSF.
    """
    if problem.time_axis is None:
        raise ValueError(f"problem {problem.name!r} has no time coordinate")
    ax, interval = problem.time_axis, problem.time_interval
    if cfg.enabled:
        r = problem.residual(net, collocation)
        L, _ = slab_losses(r, slab_index(collocation[:, ax], cfg.n_slabs, interval), cfg.n_slabs)
        w = causal_weights(L, cfg.epsilon_causal)
    else:
        w = np.ones(cfg.n_slabs)

    def q(X):
        return w[slab_index(X[:, ax], cfg.n_slabs, interval)] * np.abs(problem.residual(net, X))

    return LimitState(eps_r, q)


@dataclass(frozen=True)
class Estimate:
    """A failure-probability estimate with its empirical standard error."""

    value: float
    std_error: float
    n: int
    n_fail: int
    max_weight: float = 1.0
    flags: tuple[str, ...] = ()

    def __float__(self) -> float:
        return self.value


def _summarize(terms: np.ndarray, fail: np.ndarray, max_weight: float = 1.0) -> Estimate:
    n = terms.size
    se = float(np.std(terms, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    flags = ("weight_above_1e6",) if max_weight > WEIGHT_WARNING else ()
    return Estimate(float(np.mean(terms)), se, n, int(fail.sum()), float(max_weight), flags)


def pf_mc(ls: LimitState, prior: Proposal, n: int, seed) -> Estimate:
    """Crude Monte Carlo: the failing fraction of ``n`` prior draws."""
    if n < 1:
        raise ValueError("n must be positive")
    X = prior.sample(n, _rng(seed))
    fail = ls.fails(X)
    return _summarize(fail.astype(np.float64), fail)


def _is_terms(ls: LimitState, prior: Proposal, proposal: Proposal, X: np.ndarray):
    fail = ls.fails(X)
    h = proposal.density(X)
    w_prior = prior.density(X)
    if np.any(fail & (h <= 0) & (w_prior > 0)):
        raise SupportViolation(f"{proposal.kind} proposal has zero density on failing prior-supported points")
    ratio = np.divide(w_prior, h, out=np.zeros_like(h), where=fail)
    max_w = float(ratio.max()) if ratio.size else 0.0
    return ratio, fail, max_w


def pf_is(ls: LimitState, prior: Proposal, proposal: Proposal, n: int, seed) -> Estimate:
    """Importance sampling: mean of ``1[g > 0] w(x) / h(x)`` over ``n`` proposal draws."""
    if n < 1:
        raise ValueError("n must be positive")
    X = proposal.sample(n, _rng(seed))
    terms, fail, max_w = _is_terms(ls, prior, proposal, X)
    return _summarize(terms, fail, max_w)


# ---------------------------------------------------------------------------
# self-adaptive importance sampling


@dataclass(frozen=True)
class SaisConfig:
    n1: int = 300
    n2: int = 1000
    p0: float = 0.1
    max_rounds: int = 10
    model: str = "truncated_gaussian"
    n_components: int = 2

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 1:
            raise ConfigurationError("need N1 >= 2 and N2 >= 1")
        if not 0.0 < self.p0 < 1.0:
            raise ConfigurationError("p0 must lie in (0, 1)")
        if self.max_rounds < 1:
            raise ConfigurationError("max_rounds must be >= 1")
        if self.model not in ("truncated_gaussian", "gmm"):
            raise ConfigurationError(f"unknown SAIS model {self.model!r}")
        if self.n_p < 2:
            raise ConfigurationError(
                f"floor(p0 * N1) = {self.n_p}; at least 2 elite samples are needed for a covariance"
            )

    @property
    def n_p(self) -> int:
        return int(np.floor(self.p0 * self.n1))


@dataclass
class SaisRound:
    round: int
    n_eta: int
    mean: np.ndarray
    cov_diag: np.ndarray
    fail_fraction: float


@dataclass
class SaisResult:
    p_hat: float
    std_error: float
    adaptive_points: np.ndarray
    final_proposal: Proposal
    iterations_used: int
    terminated_by: str
    rounds: list[SaisRound] = field(default_factory=list)
    final_fail_fraction: float = 0.0
    max_weight: float = 0.0
    flags: tuple[str, ...] = ()

    def trace_rows(self):
        for r in self.rounds:
            yield [r.round, r.n_eta, *r.mean.tolist(), *r.cov_diag.tolist()]

    def write_trace(self, path) -> None:
        d = self.adaptive_points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "N_eta", *[f"mu_{i}" for i in range(d)], *[f"sigma_diag_{i}" for i in range(d)]])
            for row in self.trace_rows():
                w.writerow(row)


def proposal_moments(p: Proposal) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance diagonal of the untruncated law behind a proposal."""
    if isinstance(p, UniformBox):
        return 0.5 * (p.lower + p.upper), (p.upper - p.lower) ** 2 / 12.0
    if isinstance(p, GaussianMixture):
        mu = p.weights @ p.means
        second = sum(w * (np.diag(c) + m ** 2) for w, m, c in zip(p.weights, p.means, p.covs))
        return mu, second - mu ** 2
    if hasattr(p, "mu") and hasattr(p, "sigma"):
        return np.asarray(p.mu).copy(), np.diag(p.sigma).copy()
    raise TypeError(f"no moments for proposal kind {p.kind!r}")


def _fit_proposal(top, cfg: SaisConfig, domain: DomainSpec | None, rng, prior: Proposal | None = None):
    z_seed = int(rng.integers(2 ** 63))
    if cfg.model == "gmm":
        weights = None if prior is None else prior.density(top)
        gmm = fit_gmm_em(top, cfg.n_components, seed=int(rng.integers(2 ** 63)), weights=weights)
        if domain is None or domain.is_unconstrained:
            return gmm
        return GaussianMixture(gmm.weights, gmm.means, gmm.covs, domain, z_seed=z_seed,
                               pruned=gmm.pruned, log_likelihood=gmm.log_likelihood)
    if prior is None:
        mu, sigma = fit_moments(top)
    else:
        mu, sigma = fit_weighted_center(top, prior.density)
    return gaussian_on(mu, sigma, domain, z_seed=z_seed)


def sais(ls: LimitState, prior: Proposal, domain: DomainSpec | None, cfg: SaisConfig = SaisConfig(),
         seed=0) -> SaisResult:
    """Self-adaptive importance sampling of the failure probability.

    Each round ranks ``N1`` draws by ``g``; while fewer than
    ``N_p = floor(p0 N1)`` of them fail, the next proposal is refitted to the
    top ``N_p``.  The final proposal is fitted to the last round's top
    ``N_p`` with prior-weighted centre, ``N2`` draws from it give the
    estimate, and the failing ones are returned as adaptive points.
    ``domain=None`` means all of R^d (no truncation).
    """
    rng = _rng(seed)
    n_p = cfg.n_p
    h = prior
    rounds: list[SaisRound] = []
    terminated = "max_iters"
    top = None
    for k in range(1, cfg.max_rounds + 1):
        X = h.sample(cfg.n1, rng)
        g = ls.g(X)
        order = np.argsort(-g, kind="stable")
        n_eta = int(np.sum(g > 0))
        top = X[order[:n_p]]
        mu, var = proposal_moments(h)
        rounds.append(SaisRound(k, n_eta, mu, var, n_eta / cfg.n1))
        if n_eta >= n_p:
            terminated = "enough_failures"
            break
        if k < cfg.max_rounds:
            h = _fit_proposal(top, cfg, domain, rng)

    h_opt = _fit_proposal(top, cfg, domain, rng, prior=prior)
    S = h_opt.sample(cfg.n2, rng)
    terms, fail, max_w = _is_terms(ls, prior, h_opt, S)
    est = _summarize(terms, fail, max_w)
    return SaisResult(
        p_hat=est.value,
        std_error=est.std_error,
        adaptive_points=S[fail],
        final_proposal=h_opt,
        iterations_used=len(rounds),
        terminated_by=terminated,
        rounds=rounds,
        final_fail_fraction=float(fail.mean()),
        max_weight=max_w,
        flags=est.flags,
    )
