"""Sampleable, density-evaluable proposals and the moment/EM fits that build them.

Four kinds are provided: uniform on a box, a multivariate Gaussian, a
Gaussian truncated to a domain and a Gaussian mixture (optionally truncated).
Truncated kinds sample by rejection against the untruncated law and divide
the density by a Monte Carlo estimate of the retained mass ``Z``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .domains import DomainSpec

JITTER = 1e-8
N_Z_DEFAULT = 20_000
MAX_ATTEMPTS = 10_000
LOG_2PI = np.log(2.0 * np.pi)


class SamplingError(RuntimeError):
    """Rejection sampling could not reach the requested count."""


class NotPositiveDefinite(ValueError):
    pass


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _cholesky(sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-14):
        raise NotPositiveDefinite("covariance is not symmetric")
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("covariance is not positive definite") from exc


def _gauss_logpdf(X, mu, L) -> np.ndarray:
    d = mu.size
    Y = np.linalg.solve(L, (X - mu).T)  # whitened
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (np.sum(Y * Y, axis=0) + d * LOG_2PI + logdet)


def regularize(sigma: np.ndarray) -> np.ndarray:
    """Symmetrize and add ``JITTER * I`` when the smallest eigenvalue is below it."""
    sigma = 0.5 * (sigma + sigma.T)
    if np.linalg.eigvalsh(sigma)[0] < JITTER:
        sigma = sigma + JITTER * np.eye(sigma.shape[0])
    return sigma


def _rejection(draw, contains, n, rng, max_attempts, what):
    if n == 0:
        return np.empty((0, 0))
    kept = []
    n_kept = 0
    n_drawn = 0
    cap = max_attempts * n
    rate = 1.0
    while n_kept < n:
        need = n - n_kept
        batch = int(min(cap - n_drawn, max(64, np.ceil(1.2 * need / max(rate, 1e-4)))))
        if batch <= 0:
            raise SamplingError(
                f"{what}: acceptance rate {n_kept / max(n_drawn, 1):.2e} below 1/{max_attempts}; "
                "proposal is ill-matched to the domain"
            )
        Y = draw(batch)
        ok = contains(Y)
        n_drawn += batch
        kept.append(Y[ok])
        n_kept += int(ok.sum())
        rate = max(n_kept / n_drawn, 1.0 / max_attempts)
    return np.concatenate(kept)[:n]


class Proposal:
    """Base class.  Subclasses implement :meth:`sample` and :meth:`density`."""

    kind: str = ""
    dim: int = 0

    def sample(self, n: int, rng) -> np.ndarray:
        raise NotImplementedError

    def density(self, X) -> np.ndarray:
        raise NotImplementedError

    def support(self, X) -> np.ndarray:
        return np.ones(np.atleast_2d(X).shape[0], dtype=bool)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class UniformBox(Proposal):
    """Uniform law on an axis-aligned box, density ``1/vol`` inside."""

    lower: np.ndarray
    upper: np.ndarray
    kind: str = field(default="uniform_box", init=False)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if np.any(self.upper <= self.lower) or not np.all(np.isfinite(self.upper - self.lower)):
            raise ValueError("uniform box needs finite bounds with lower < upper")
        self.dim = self.lower.size

    @classmethod
    def on(cls, domain: DomainSpec) -> "UniformBox":
        return cls(domain.lower, domain.upper)

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def sample(self, n, rng):
        return _rng(rng).uniform(self.lower, self.upper, size=(n, self.dim))

    def support(self, X):
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def density(self, X):
        return np.where(self.support(X), 1.0 / self.volume, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass
class Gaussian(Proposal):
    mu: np.ndarray
    sigma: np.ndarray
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        self.dim = self.mu.size
        self._L = _cholesky(self.sigma)

    def draw(self, n, rng):
        return self.mu + _rng(rng).standard_normal((n, self.dim)) @ self._L.T

    def sample(self, n, rng):
        return self.draw(n, rng)

    def logpdf(self, X):
        return _gauss_logpdf(np.atleast_2d(X), self.mu, self._L)

    def density(self, X):
        return np.exp(self.logpdf(X))

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu.tolist(), "sigma": self.sigma.ravel().tolist()}


@dataclass
class TruncatedGaussian(Proposal):
    """``N(mu, sigma)`` restricted to ``domain`` and renormalized by MC-estimated ``Z``."""

    mu: np.ndarray
    sigma: np.ndarray
    domain: DomainSpec
    z_seed: int = 0
    n_z: int = N_Z_DEFAULT
    max_attempts: int = MAX_ATTEMPTS
    z: float = field(default=np.nan)
    z_std_error: float = field(default=0.0)
    kind: str = field(default="truncated_gaussian", init=False)

    def __post_init__(self):
        self.base = Gaussian(self.mu, self.sigma)
        self.mu, self.sigma, self.dim = self.base.mu, self.base.sigma, self.base.dim
        if np.isnan(self.z):
            if self.domain.is_unconstrained:
                self.z, self.z_std_error = 1.0, 0.0
            else:
                Y = self.base.draw(self.n_z, np.random.default_rng(self.z_seed))
                self.z = float(self.domain.contains(Y).mean())
                self.z_std_error = float(np.sqrt(self.z * (1.0 - self.z) / self.n_z))
        if self.z <= 0.0:
            raise SamplingError("truncated Gaussian retains no mass inside the domain")

    def support(self, X):
        return self.domain.contains(X)

    def sample(self, n, rng):
        rng = _rng(rng)
        if n == 0:
            return np.empty((0, self.dim))
        return _rejection(
            lambda m: self.base.draw(m, rng), self.domain.contains, n, rng,
            self.max_attempts, "truncated Gaussian",
        )

    def density(self, X):
        X = np.atleast_2d(X)
        return np.where(self.support(X), self.base.density(X) / self.z, 0.0)

    def to_dict(self):
        return {
            "kind": self.kind,
            "mu": self.mu.tolist(),
            "sigma": self.sigma.ravel().tolist(),
            "Z": self.z,
            "N_Z": self.n_z,
            "domain": self.domain.to_dict(),
        }


@dataclass
class GaussianMixture(Proposal):
    """``sum_m pi_m N(mu_m, sigma_m)``, optionally truncated to ``domain``."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    domain: DomainSpec | None = None
    z_seed: int = 0
    n_z: int = N_Z_DEFAULT
    max_attempts: int = MAX_ATTEMPTS
    z: float = field(default=np.nan)
    z_std_error: float = field(default=0.0)
    pruned: int = 0
    log_likelihood: list = field(default_factory=list)
    kind: str = field(default="gmm", init=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covs = np.asarray(self.covs, dtype=np.float64).reshape(
            len(self.weights), self.means.shape[1], self.means.shape[1]
        )
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to one")
        self.dim = self.means.shape[1]
        self._chols = [_cholesky(c) for c in self.covs]
        if np.isnan(self.z):
            if self.domain is None or self.domain.is_unconstrained:
                self.z, self.z_std_error = 1.0, 0.0
            else:
                Y = self.draw(self.n_z, np.random.default_rng(self.z_seed))
                self.z = float(self.domain.contains(Y).mean())
                self.z_std_error = float(np.sqrt(self.z * (1.0 - self.z) / self.n_z))
        if self.z <= 0.0:
            raise SamplingError("mixture retains no mass inside the domain")

    @property
    def n_components(self) -> int:
        return self.weights.size

    def draw(self, n, rng):
        rng = _rng(rng)
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        Z = rng.standard_normal((n, self.dim))
        X = np.empty((n, self.dim))
        for m in range(self.n_components):
            sel = comp == m
            X[sel] = self.means[m] + Z[sel] @ self._chols[m].T
        return X

    def component_logpdf(self, X) -> np.ndarray:
        """``log pi_m + log N(x; mu_m, sigma_m)``, shape ``(N, M)``."""
        X = np.atleast_2d(X)
        return np.stack(
            [np.log(w) + _gauss_logpdf(X, mu, L) for w, mu, L in zip(self.weights, self.means, self._chols)],
            axis=1,
        )

    def support(self, X):
        if self.domain is None:
            return np.ones(np.atleast_2d(X).shape[0], dtype=bool)
        return self.domain.contains(X)

    def sample(self, n, rng):
        rng = _rng(rng)
        if n == 0:
            return np.empty((0, self.dim))
        if self.domain is None or self.domain.is_unconstrained:
            return self.draw(n, rng)
        return _rejection(
            lambda m: self.draw(m, rng), self.domain.contains, n, rng, self.max_attempts, "Gaussian mixture"
        )

    def density(self, X):
        X = np.atleast_2d(X)
        dens = np.exp(_logsumexp(self.component_logpdf(X), axis=1)) / self.z
        return np.where(self.support(X), dens, 0.0)

    def to_dict(self):
        return {
            "kind": self.kind,
            "components": [
                {"weight": float(w), "mu": mu.tolist(), "sigma": c.ravel().tolist()}
                for w, mu, c in zip(self.weights, self.means, self.covs)
            ],
            "Z": self.z,
            "N_Z": self.n_z,
            "domain": None if self.domain is None else self.domain.to_dict(),
        }


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def proposal_from_dict(data: dict) -> Proposal:
    kind = data["kind"]
    if kind == "uniform_box":
        return UniformBox(data["lower"], data["upper"])
    d = None
    if kind in ("gaussian", "truncated_gaussian"):
        mu = np.asarray(data["mu"], dtype=np.float64)
        sigma = np.asarray(data["sigma"], dtype=np.float64).reshape(mu.size, mu.size)
        if kind == "gaussian":
            return Gaussian(mu, sigma)
        d = DomainSpec.from_dict(data["domain"])
        return TruncatedGaussian(mu, sigma, d, n_z=data["N_Z"], z=data["Z"])
    if kind == "gmm":
        comps = data["components"]
        mus = np.array([c["mu"] for c in comps], dtype=np.float64)
        dim = mus.shape[1]
        covs = np.array([np.reshape(c["sigma"], (dim, dim)) for c in comps], dtype=np.float64)
        if data.get("domain"):
            d = DomainSpec.from_dict(data["domain"])
        return GaussianMixture(
            np.array([c["weight"] for c in comps]), mus, covs, d, n_z=data["N_Z"], z=data["Z"]
        )
    raise ValueError(f"unknown proposal kind {kind!r}")


def proposal_from_json(text: str) -> Proposal:
    return proposal_from_dict(json.loads(text))


def gaussian_on(mu, sigma, domain: DomainSpec | None, z_seed: int = 0) -> Proposal:
    """Gaussian proposal restricted to ``domain`` (plain Gaussian if it is all of R^d)."""
    if domain is None or domain.is_unconstrained:
        return Gaussian(mu, sigma)
    return TruncatedGaussian(mu, sigma, domain, z_seed=z_seed)


# ---------------------------------------------------------------------------
# module-level operations


def sample(p: Proposal, n: int, seed) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be nonnegative")
    return p.sample(n, _rng(seed))


def density(p: Proposal, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1 and p.dim == x.size:
        return float(p.density(x[None, :])[0])
    return p.density(x)


def fit_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased covariance (divisor ``N - 1``), jittered if degenerate."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    mu = X.mean(axis=0)
    D = X - mu
    sigma = D.T @ D / (X.shape[0] - 1)
    return mu, regularize(sigma)


def fit_weighted_center(samples, prior_density) -> tuple[np.ndarray, np.ndarray]:
    """Prior-weighted mean, and unbiased covariance of the samples about that mean.

    ``prior_density`` is a callable on ``(N, d)`` arrays or a precomputed
    array of prior densities.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    w = prior_density(X) if callable(prior_density) else np.asarray(prior_density, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise ValueError("prior density vanishes at every sample")
    mu = (w[:, None] * X).sum(axis=0) / total
    D = X - mu
    sigma = D.T @ D / (X.shape[0] - 1)
    return mu, regularize(sigma)


def _kmeans_pp(X, k, rng):
    centers = [X[rng.integers(X.shape[0])]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.asarray(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(X[rng.integers(X.shape[0])])
        else:
            centers.append(X[rng.choice(X.shape[0], p=d2 / total)])
    return np.asarray(centers)


def fit_gmm_em(
    samples,
    n_components: int = 2,
    seed=0,
    max_iters: int = 200,
    tol: float = 1e-8,
    domain: DomainSpec | None = None,
    weights=None,
) -> GaussianMixture:
    """Expectation-maximization for a Gaussian mixture with k-means++ seeding.

    Components whose weight drops below ``1e-6`` are pruned (the count is
    stored in ``pruned``).  Iteration stops once the log-likelihood gains
    less than ``tol``; a step that would lower it is rejected.  Optional
    per-sample ``weights`` give a weighted likelihood.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    N, d = X.shape
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if N < n_components * (d + 1):
        raise ValueError(f"need at least {n_components * (d + 1)} samples for {n_components} components")
    sw = np.ones(N) if weights is None else np.asarray(weights, dtype=np.float64)
    sw = sw * N / sw.sum()
    rng = _rng(seed)

    means = _kmeans_pp(X, n_components, rng)
    # hard assignment to the nearest center for the initial covariances
    lab = np.argmin(((X[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    base = regularize(np.cov(X.T, aweights=sw).reshape(d, d) if N > 1 else np.eye(d))
    covs = np.empty((n_components, d, d))
    pis = np.empty(n_components)
    for m in range(n_components):
        sel = lab == m
        pis[m] = max(sw[sel].sum() / N, 1e-3)
        covs[m] = _weighted_cov(X[sel], means[m], sw[sel]) if sel.sum() > d else base
    pis /= pis.sum()

    pruned = 0
    history = []
    prev = -np.inf
    for _ in range(max_iters):
        logp = np.stack(
            [np.log(p) + _gauss_logpdf(X, mu, _cholesky(c)) for p, mu, c in zip(pis, means, covs)], axis=1
        )
        lse = _logsumexp(logp, axis=1)
        ll = float((sw * lse).sum())
        if ll < prev - 1e-10 * abs(prev):
            # jitter made the step non-monotone: keep the previous parameters
            pis, means, covs = old
            break
        history.append(ll)
        if ll - prev < tol * max(1.0, abs(ll)):
            break
        prev = ll
        old = (pis.copy(), means.copy(), covs.copy())

        resp = np.exp(logp - lse[:, None]) * sw[:, None]
        nk = resp.sum(axis=0)
        keep = nk / N >= 1e-6
        if not keep.all():
            pruned += int((~keep).sum())
            resp, nk = resp[:, keep], nk[keep]
            prev = -np.inf  # likelihood of a different model; restart the monotone check
        pis = nk / nk.sum()
        means = (resp.T @ X) / nk[:, None]
        covs = np.stack([_weighted_cov(X, means[m], resp[:, m]) for m in range(nk.size)])

    pis = pis / pis.sum()
    return GaussianMixture(pis, means, covs, domain, pruned=pruned, log_likelihood=history)


def _weighted_cov(X, mu, w):
    D = X - mu
    c = (w[:, None] * D).T @ D / w.sum()
    return regularize(c)
