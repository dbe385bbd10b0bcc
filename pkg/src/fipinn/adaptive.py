"""The failure-informed outer loop and the Uniform / RAR enrichment baselines.

Each outer round trains the network, builds the limit-state function from
its residual, estimates the failure probability and, unless that estimate
is already below tolerance, appends new collocation points.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .distributions import Proposal, _rng
from .failure import (
    LimitState,
    SaisConfig,
    causal_limit_state,
    pf_mc,
    residual_limit_state,
    sais,
)
from .nn import ConfigurationError, Network, forward
from .problems import PdeProblem
from .seeding import ENRICH, ESTIMATE, TRAIN, derive_seed
from .training import CausalConfig, TrainingSet, loss_and_grad, train_adam, train_lbfgs

STRATEGIES = ("sais", "rar", "uniform")
MAX_STALL_RETRIES = 2


@dataclass(frozen=True)
class AdaptiveConfig:
    """Tolerances, enrichment strategy and per-round training budget.

    For ``rar`` and ``uniform`` the number of added points is ``m``, or
    ``m_schedule[s - 1]`` in round ``s`` when a schedule is given.  The
    baselines estimate the failure probability by crude MC on ``pool_size``
    prior draws.
    """

    eps_r: float = 0.1
    eps_p: float = 0.1
    max_outer: int = 10
    strategy: str = "sais"
    sais: SaisConfig = SaisConfig()
    pool_size: int = 10_000
    m: int = 100
    m_schedule: tuple[int, ...] | None = None
    adam_steps: int = 10_000
    lr: float = 1e-4
    lbfgs_iters: int = 0
    lam: float = 1.0
    causal: CausalConfig | None = None
    train_first_round: bool = True
    history_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (self.eps_r > 0 and self.eps_p > 0):
            raise ConfigurationError("eps_r and eps_p must be positive")
        if self.max_outer < 1:
            raise ConfigurationError("max_outer must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.strategy == "rar" and self.m > self.pool_size:
            raise ConfigurationError("RAR needs m <= pool_size")

    def points_for_round(self, s: int) -> int:
        if self.m_schedule is not None:
            return int(self.m_schedule[s - 1]) if s <= len(self.m_schedule) else 0
        return self.m


@dataclass
class RoundRecord:
    round: int
    n_points: int
    p_hat: float
    p_std_error: float
    rel_l2: float
    train_loss: float
    seconds: float
    n_added: int = 0
    stalls: int = 0


@dataclass
class AdaptiveTrace:
    records: list[RoundRecord] = field(default_factory=list)
    stop_reason: str = ""
    added: list[np.ndarray] = field(default_factory=list)
    histories: list = field(default_factory=list)
    sais_results: list = field(default_factory=list)

    @property
    def p_hats(self) -> list[float]:
        return [r.p_hat for r in self.records]

    @property
    def rel_l2(self) -> list[float]:
        return [r.rel_l2 for r in self.records]

    @property
    def n_added(self) -> list[int]:
        return [r.n_added for r in self.records]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "n_points", "p_hat", "rel_l2", "train_loss", "seconds"])
            for r in self.records:
                w.writerow([r.round, r.n_points, repr(r.p_hat), repr(r.rel_l2), repr(r.train_loss),
                            f"{r.seconds:.3f}"])

    def to_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "rounds": [
                {"round": r.round, "n_points": r.n_points, "p_hat": r.p_hat, "p_std_error": r.p_std_error,
                 "rel_l2": r.rel_l2, "train_loss": r.train_loss, "n_added": r.n_added, "stalls": r.stalls}
                for r in self.records
            ],
        }


def enrich_rar(ls: LimitState, prior: Proposal, pool_size: int, m: int, seed) -> np.ndarray:
    """The ``m`` pool points with the largest ``g`` (ties keep draw order)."""
    if m > pool_size:
        raise ValueError("m must not exceed pool_size")
    pool = prior.sample(pool_size, _rng(seed))
    order = np.argsort(-ls.g(pool), kind="stable")
    return pool[order[:m]]


def enrich_uniform(prior: Proposal, m: int, seed) -> np.ndarray:
    return prior.sample(m, _rng(seed))


def relative_l2(predictions, exact) -> float:
    """``||u_hat - u|| / ||u||`` over matching point sets."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    u = np.asarray(exact, dtype=np.float64).ravel()
    if p.size == 0 or p.size != u.size:
        raise ValueError("predictions and exact values must be nonempty and the same length")
    norm = np.linalg.norm(u)
    if norm == 0:
        raise ValueError("exact values are identically zero")
    return float(np.linalg.norm(p - u) / norm)


def default_evaluator(problem: PdeProblem) -> Callable[[Network], float] | None:
    if problem.evaluation is None:
        return None
    ev = problem.evaluation_set()
    return lambda net: relative_l2(forward(net, ev.points), ev.values)


def _limit_state(net, problem, ts, cfg: AdaptiveConfig) -> LimitState:
    if cfg.causal is not None and cfg.causal.enabled:
        return causal_limit_state(net, problem, cfg.causal, cfg.eps_r, ts.collocation)
    return residual_limit_state(net, problem, cfg.eps_r)


def _estimate_and_enrich(ls, problem, cfg: AdaptiveConfig, s: int, attempt: int):
    """Returns ``(p_hat, std_error, points, sais_result)`` for round ``s``."""
    key = attempt * 1_000_003
    if cfg.strategy == "sais":
        res = sais(ls, problem.prior, problem.domain, cfg.sais, derive_seed(cfg.seed, s, ESTIMATE, key))
        return res.p_hat, res.std_error, res.adaptive_points, res
    est = pf_mc(ls, problem.prior, cfg.pool_size, derive_seed(cfg.seed, s, ESTIMATE, key))
    m = cfg.points_for_round(s)
    seed = derive_seed(cfg.seed, s, ENRICH, key)
    if cfg.strategy == "rar":
        pts = enrich_rar(ls, problem.prior, cfg.pool_size, m, seed)
    else:
        pts = enrich_uniform(problem.prior, m, seed)
    return est.value, est.std_error, pts, None


def run_fi_pinn(problem: PdeProblem, net: Network, ts: TrainingSet, cfg: AdaptiveConfig,
                evaluate: Callable[[Network], float] | None = None,
                checkpoint_dir=None, log: Callable[[str], None] | None = None):
    """Run the adaptive loop; returns ``(network, trace, training set)``.

    ``evaluate`` maps a network to its relative L2 error (defaults to the
    problem's evaluation set).  With ``train_first_round=False`` the given
    network is taken as already trained on ``ts`` for round 1.
    """
    if ts.n_collocation == 0:
        raise ValueError("initial training set is empty")
    if evaluate is None:
        evaluate = default_evaluator(problem)
    trace = AdaptiveTrace()
    tag = cfg.strategy
    for s in range(1, cfg.max_outer + 1):
        t0 = time.perf_counter()
        if s > 1 or cfg.train_first_round:
            net, hist = train_adam(net, problem, ts, cfg.adam_steps, cfg.lr, cfg.lam, cfg.causal,
                                   seed=derive_seed(cfg.seed, s, TRAIN), history_every=cfg.history_every)
            if cfg.lbfgs_iters:
                net, h2 = train_lbfgs(net, problem, ts, cfg.lbfgs_iters, cfg.lam, cfg.causal)
                hist = (hist, h2)
            trace.histories.append(hist)
            train_loss = (hist[1] if isinstance(hist, tuple) else hist).final
        else:
            train_loss = loss_and_grad(net, problem, ts, cfg.lam, cfg.causal, need_grad=False)[0].total
            trace.histories.append(None)

        ls = _limit_state(net, problem, ts, cfg)
        stalls = 0
        p_hat, se, pts, res = _estimate_and_enrich(ls, problem, cfg, s, 0)
        while p_hat >= cfg.eps_p and len(pts) == 0 and stalls < MAX_STALL_RETRIES and s < cfg.max_outer:
            stalls += 1
            p_hat, se, pts, res = _estimate_and_enrich(ls, problem, cfg, s, stalls)
        if res is not None:
            trace.sais_results.append(res)
        rel = evaluate(net) if evaluate is not None else float("nan")
        rec = RoundRecord(s, ts.n_collocation, float(p_hat), float(se), rel, float(train_loss),
                          time.perf_counter() - t0, 0, stalls)
        trace.records.append(rec)
        if checkpoint_dir is not None:
            net.save(Path(checkpoint_dir) / f"checkpoint_round_{s}.json")
        if log is not None:
            log(f"[{tag}] round {s}: n={ts.n_collocation} p_hat={p_hat:.3e} rel_l2={rel:.3e} "
                f"loss={train_loss:.3e} ({rec.seconds:.1f}s)")
        if p_hat < cfg.eps_p:
            trace.stop_reason = "pf_below_tol"
            break
        if s == cfg.max_outer:
            trace.stop_reason = "max_outer"
            break
        rec.n_added = len(pts)
        trace.added.append(np.asarray(pts))
        ts = ts.enriched(pts, tag)
    return net, trace, ts


def baseline_config(sais_cfg: AdaptiveConfig, sais_trace: AdaptiveTrace, strategy: str) -> AdaptiveConfig:
    """Baseline settings matched to a finished SAIS run: same rounds, same per-round additions."""
    schedule = tuple(sais_trace.n_added)
    return replace(sais_cfg, strategy=strategy, max_outer=len(sais_trace.records),
                   m_schedule=schedule, m=max(schedule, default=0))
