"""Composite residual losses, causal time weighting, and full-batch optimizers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .nn import Network
from .problems import PdeProblem

PROVENANCE_TAGS = ("initial", "uniform", "rar", "sais")


@dataclass
class TrainingSet:
    """Collocation points with provenance tags, and boundary points with condition indices."""

    collocation: np.ndarray
    boundary: np.ndarray
    boundary_kind: np.ndarray | None = None
    provenance: np.ndarray | None = None

    def __post_init__(self):
        self.collocation = np.atleast_2d(np.asarray(self.collocation, dtype=np.float64))
        self.boundary = np.atleast_2d(np.asarray(self.boundary, dtype=np.float64))
        if self.boundary_kind is None:
            self.boundary_kind = np.zeros(self.boundary.shape[0], dtype=np.int64)
        self.boundary_kind = np.asarray(self.boundary_kind, dtype=np.int64)
        if self.provenance is None:
            self.provenance = np.full(self.collocation.shape[0], "initial", dtype="<U7")
        self.provenance = np.asarray(self.provenance, dtype="<U7")
        if self.provenance.shape[0] != self.collocation.shape[0]:
            raise ValueError("one provenance tag per collocation point")
        bad = set(np.unique(self.provenance)) - set(PROVENANCE_TAGS)
        if bad:
            raise ValueError(f"unknown provenance tags {sorted(bad)}")

    @property
    def n_collocation(self) -> int:
        return self.collocation.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary.shape[0]

    def enriched(self, points, tag: str) -> "TrainingSet":
        """A new set with ``points`` appended to the collocation points under ``tag``."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.collocation.shape[1])
        return TrainingSet(
            np.concatenate([self.collocation, points]),
            self.boundary,
            self.boundary_kind,
            np.concatenate([self.provenance, np.full(points.shape[0], tag, dtype="<U7")]),
        )

    def counts(self) -> dict[str, int]:
        return {t: int(np.sum(self.provenance == t)) for t in PROVENANCE_TAGS}


def initial_training_set(problem: PdeProblem, n_collocation: int, n_boundary: int,
                         rng: np.random.Generator) -> TrainingSet:
    Xc = problem.sample_interior(n_collocation, rng)
    Xb, kind = problem.sample_boundary(n_boundary, rng)
    return TrainingSet(Xc, Xb, kind)


@dataclass(frozen=True)
class LossReport:
    total: float
    interior: float
    boundary: float
    lam: float = 1.0


@dataclass(frozen=True)
class CausalConfig:
    """Time-slab weighting of the interior loss; ``epsilon_causal`` is the decay rate."""

    n_slabs: int = 32
    epsilon_causal: float = 100.0
    enabled: bool = True

    def __post_init__(self):
        if self.n_slabs < 1:
            raise ValueError("n_slabs must be at least 1")
        if self.epsilon_causal < 0:
            raise ValueError("epsilon_causal must be nonnegative")


def causal_weights(slab_losses, epsilon_causal: float) -> np.ndarray:
    """``w_1 = 1`` and ``w_i = exp(-eps * sum_{k<i} L_k)``."""
    if epsilon_causal < 0:
        raise ValueError("epsilon_causal must be nonnegative")
    L = np.asarray(slab_losses, dtype=np.float64)
    if np.any(L < 0):
        raise ValueError("slab losses must be nonnegative")
    shifted = np.concatenate([[0.0], np.cumsum(L)[:-1]])
    return np.exp(-epsilon_causal * shifted)


def slab_index(t, n_slabs: int, interval: tuple[float, float]) -> np.ndarray:
    """Half-open uniform slabs over ``interval``; the last slab is closed."""
    t0, t1 = interval
    idx = np.floor((np.asarray(t, dtype=np.float64) - t0) / (t1 - t0) * n_slabs).astype(np.int64)
    return np.clip(idx, 0, n_slabs - 1)


def slab_losses(r: np.ndarray, slabs: np.ndarray, n_slabs: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean squared residual per slab (0 for empty slabs) and the slab counts."""
    counts = np.bincount(slabs, minlength=n_slabs).astype(np.float64)
    sums = np.bincount(slabs, weights=r * r, minlength=n_slabs)
    means = np.divide(sums, counts, out=np.zeros(n_slabs), where=counts > 0)
    return means, counts


def _check(problem: PdeProblem, ts: TrainingSet):
    if ts.n_collocation == 0 or ts.n_boundary == 0:
        raise ValueError("training set needs collocation and boundary points")


def loss_and_grad(net: Network, problem: PdeProblem, ts: TrainingSet, lam: float = 1.0,
                  causal: CausalConfig | None = None, need_grad: bool = True):
    """Loss report and (optionally) its exact parameter gradient.

    With an enabled ``causal`` config the interior term is
    ``(1/N_t) sum_i w_i L_i`` with the weights held constant in the gradient.
    """
    _check(problem, ts)
    r, pull_r = problem.residual_pullback(net, ts.collocation)
    n = r.size
    if causal is not None and causal.enabled:
        if problem.time_axis is None:
            raise ValueError(f"problem {problem.name!r} has no time coordinate")
        slabs = slab_index(ts.collocation[:, problem.time_axis], causal.n_slabs, problem.time_interval)
        L, counts = slab_losses(r, slabs, causal.n_slabs)
        w = causal_weights(L, causal.epsilon_causal)
        interior = float(np.dot(w, L) / causal.n_slabs)
        scale = np.divide(w, counts, out=np.zeros_like(w), where=counts > 0) / causal.n_slabs
        cot_r = 2.0 * scale[slabs] * r
    else:
        interior = float(np.mean(r * r))
        cot_r = 2.0 * r / n

    nb = ts.n_boundary
    boundary = 0.0
    grad = pull_r(cot_r) if need_grad else None
    for k, cond in enumerate(problem.conditions):
        sel = ts.boundary_kind == k
        if not np.any(sel):
            continue
        b, pull_b = cond.pullback(net, ts.boundary[sel])
        boundary += float(np.sum(b * b)) / nb
        if need_grad:
            grad += pull_b(lam * 2.0 * b / nb)
    report = LossReport(interior + lam * boundary, interior, boundary, lam)
    return report, grad


def loss(net: Network, problem: PdeProblem, ts: TrainingSet, lam: float = 1.0) -> LossReport:
    """Mean-reduced interior and boundary squared residuals, ``total = interior + lam * boundary``."""
    return loss_and_grad(net, problem, ts, lam, need_grad=False)[0]


def causal_loss(net: Network, problem: PdeProblem, ts: TrainingSet, cfg: CausalConfig,
                lam: float = 1.0) -> LossReport:
    return loss_and_grad(net, problem, ts, lam, causal=cfg, need_grad=False)[0]


@dataclass
class LossHistory:
    steps: list[int] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    interior: list[float] = field(default_factory=list)
    boundary: list[float] = field(default_factory=list)
    status: str = "ok"

    def append(self, step: int, rep: LossReport) -> None:
        self.steps.append(step)
        self.total.append(rep.total)
        self.interior.append(rep.interior)
        self.boundary.append(rep.boundary)

    @property
    def final(self) -> float:
        return self.total[-1] if self.total else float("nan")

    def rows(self):
        return zip(self.steps, self.total, self.interior, self.boundary)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "total", "interior", "boundary"])
            for s, t, i, b in self.rows():
                w.writerow([s, repr(t), repr(i), repr(b)])


@dataclass(frozen=True)
class AdamConfig:
    steps: int = 10_000
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    history_every: int = 100


def train_adam(net: Network, problem: PdeProblem, ts: TrainingSet, steps: int, lr: float,
               lam: float = 1.0, causal: CausalConfig | None = None, seed: int = 0,
               history_every: int = 100, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8) -> tuple[Network, LossHistory]:
    """Full-batch Adam from fresh moments.

    The history records the loss at step 0, every ``history_every`` steps,
    and after the final step.  Full-batch updates draw no random numbers, so
    ``seed`` only labels the run.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    theta = net.params.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    hist = LossHistory()
    cur = net
    for k in range(steps):
        rep, g = loss_and_grad(cur, problem, ts, lam, causal)
        if k % history_every == 0:
            hist.append(k, rep)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** (k + 1))
        vhat = v / (1.0 - beta2 ** (k + 1))
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
        cur = net.with_params(theta)
    hist.append(steps, loss_and_grad(cur, problem, ts, lam, causal, need_grad=False)[0])
    return cur, hist


def train_lbfgs(net: Network, problem: PdeProblem, ts: TrainingSet, max_iters: int,
                lam: float = 1.0, causal: CausalConfig | None = None, history_size: int = 10,
                gtol: float = 1e-12, c1: float = 1e-4, max_backtracks: int = 40,
                history_every: int = 1) -> tuple[Network, LossHistory]:
    """L-BFGS with two-loop recursion and Armijo backtracking.

    Terminates with status ``converged`` (gradient norm below ``gtol``),
    ``max_iters`` or ``line_search_failed``; the latter returns the best
    parameters seen rather than raising.
    """
    if max_iters < 0:
        raise ValueError("max_iters must be nonnegative")

    def fg(theta):
        rep, g = loss_and_grad(net.with_params(theta), problem, ts, lam, causal)
        return rep, g

    theta = net.params.copy()
    rep, g = fg(theta)
    hist = LossHistory()
    hist.append(0, rep)
    S, Y = [], []
    status = "max_iters"
    accepted = 0
    for it in range(1, max_iters + 1):
        if np.linalg.norm(g) < gtol:
            status = "converged"
            break
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            a = np.dot(s, q) / np.dot(y, s)
            alphas.append(a)
            q -= a * y
        if S:
            q *= np.dot(S[-1], Y[-1]) / np.dot(Y[-1], Y[-1])
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            b = np.dot(y, q) / np.dot(y, s)
            q += (a - b) * s
        p = -q
        slope = np.dot(g, p)
        if slope >= 0:
            S.clear()
            Y.clear()
            p = -g
            slope = -np.dot(g, g)
        step = 1.0
        for _ in range(max_backtracks):
            new_theta = theta + step * p
            new_rep, new_g = fg(new_theta)
            if np.isfinite(new_rep.total) and new_rep.total <= rep.total + c1 * step * slope:
                break
            step *= 0.5
        else:
            status = "line_search_failed"
            break
        s_k = new_theta - theta
        y_k = new_g - g
        if np.dot(s_k, y_k) > 1e-12 * np.linalg.norm(s_k) * np.linalg.norm(y_k):
            S.append(s_k)
            Y.append(y_k)
            if len(S) > history_size:
                S.pop(0)
                Y.pop(0)
        theta, rep, g = new_theta, new_rep, new_g
        accepted = it
        if it % history_every == 0:
            hist.append(it, rep)
    if status == "max_iters" and np.linalg.norm(g) < gtol:
        status = "converged"
    if hist.steps[-1] != accepted:
        hist.append(accepted, rep)
    hist.status = status
    return net.with_params(theta), hist
