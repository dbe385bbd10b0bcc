"""Configuration-driven experiments: single runs, strategy comparisons, convergence studies.

A run pretrains one network on the initial training set and then hands it
to the adaptive loop.  Comparisons run the failure-informed strategy first
and give the baselines its per-round point counts, all starting from the
same pretrained network.
"""

from __future__ import annotations

import csv
import json
import platform
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .adaptive import AdaptiveConfig, AdaptiveTrace, baseline_config, relative_l2, run_fi_pinn
from .failure import SaisConfig
from .nn import Network, forward, init_network
from .problems import CATALOG, PdeProblem, get_problem
from .seeding import DATA, INIT, derive_seed
from .training import CausalConfig, TrainingSet, initial_training_set, train_adam, train_lbfgs


@dataclass
class ExperimentConfig:
    """Flat experiment description; every field can be set from JSON or the command line."""

    problem: str = "poisson_peak_2d"
    problem_args: dict = field(default_factory=dict)
    widths: list = field(default_factory=lambda: [2] + [20] * 7 + [1])
    n_collocation: int = 2000
    n_boundary: int = 200
    pretrain_steps: int = 10_000
    pretrain_lbfgs: int = 0
    lr: float = 1e-4
    lam: float = 1.0
    eps_r: float = 0.1
    eps_p: float = 0.1
    max_outer: int = 10
    strategy: str = "sais"
    n1: int = 300
    n2: int = 1000
    p0: float = 0.1
    sais_rounds: int = 10
    sais_model: str = "truncated_gaussian"
    n_components: int = 2
    pool_size: int = 10_000
    m: int = 100
    adam_steps: int = 10_000
    lbfgs_iters: int = 0
    causal_slabs: int = 0
    causal_eps: float = 100.0
    history_every: int = 100
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0])
    compare: list = field(default_factory=list)
    write_fields: bool = True
    out: str = "runs/experiment"

    def __post_init__(self):
        if self.problem not in CATALOG:
            raise KeyError(f"unknown problem id {self.problem!r}; known: {sorted(CATALOG)}")
        if self.n_collocation <= 0 or self.n_boundary <= 0:
            raise ValueError("point counts must be positive")
        self.widths = [int(w) for w in self.widths]
        self.seeds = [int(s) for s in self.seeds]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"description"}
        if unknown:
            raise KeyError(f"unknown config keys {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def causal(self) -> CausalConfig | None:
        return CausalConfig(self.causal_slabs, self.causal_eps) if self.causal_slabs > 0 else None

    def adaptive(self, seed: int, strategy: str | None = None) -> AdaptiveConfig:
        return AdaptiveConfig(
            eps_r=self.eps_r, eps_p=self.eps_p, max_outer=self.max_outer,
            strategy=strategy or self.strategy,
            sais=SaisConfig(self.n1, self.n2, self.p0, self.sais_rounds, self.sais_model, self.n_components),
            pool_size=self.pool_size, m=self.m, adam_steps=self.adam_steps, lr=self.lr,
            lbfgs_iters=self.lbfgs_iters, lam=self.lam, causal=self.causal(), train_first_round=False,
            history_every=self.history_every, seed=seed,
        )

    def build_problem(self) -> PdeProblem:
        return get_problem(self.problem, **self.problem_args)


@dataclass
class MetricsReport:
    """Final errors, the per-round trace and provenance of one run.

    ``timing`` holds wall-clock seconds and is the only part that differs
    between two runs of the same configuration.
    """

    relative_l2: float
    max_abs_error: float
    strategy: str
    seed: int
    trace: dict
    config: dict
    versions: dict
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def deterministic_part(self) -> dict:
        d = self.to_dict()
        d.pop("timing")
        return d


def versions() -> dict:
    return {"fipinn": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def coordinate_names(problem: PdeProblem) -> list[str]:
    if problem.time_axis is not None and problem.dim == 2:
        return ["x", "t"]
    if problem.dim == 2:
        return ["x", "y"]
    return [f"x{i + 1}" for i in range(problem.dim)]


def write_points(path, points: np.ndarray, names: list[str], extra: dict | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + list(extra))
        cols = [points[:, i] for i in range(points.shape[1])] + [np.asarray(v) for v in extra.values()]
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def pretrain(cfg: ExperimentConfig, problem: PdeProblem, seed: int, log=None) -> tuple[Network, TrainingSet]:
    """Initial network and training set, trained once and shared by every strategy."""
    rng = np.random.default_rng(derive_seed(seed, 0, DATA))
    ts = initial_training_set(problem, cfg.n_collocation, cfg.n_boundary, rng)
    net = init_network(cfg.widths, derive_seed(seed, 0, INIT))
    net, hist = train_adam(net, problem, ts, cfg.pretrain_steps, cfg.lr, cfg.lam, cfg.causal(),
                           history_every=cfg.history_every)
    if cfg.pretrain_lbfgs:
        net, hist = train_lbfgs(net, problem, ts, cfg.pretrain_lbfgs, cfg.lam, cfg.causal())
    if log is not None:
        log(f"pretrained {cfg.problem} seed={seed}: loss={hist.final:.3e}")
    return net, ts


def _evaluate(problem: PdeProblem, net: Network):
    ev = problem.evaluation_set()
    pred = forward(net, ev.points)
    return ev, pred, relative_l2(pred, ev.values), float(np.max(np.abs(pred - ev.values)))


def _write_outputs(out: Path, cfg: ExperimentConfig, problem: PdeProblem, net: Network,
                   trace: AdaptiveTrace, report: MetricsReport, ev, pred) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    trace.write_csv(out / "trace.csv")
    names = coordinate_names(problem)
    for k, pts in enumerate(trace.added, start=1):
        write_points(out / f"points_round_{k}.csv", pts, names)
    for k, res in enumerate(trace.sais_results, start=1):
        res.write_trace(out / f"sais_round_{k}.csv")
    for k, hist in enumerate(trace.histories, start=1):
        if hist is not None:
            (hist[-1] if isinstance(hist, tuple) else hist).to_csv(out / f"history_round_{k}.csv")
    if cfg.write_fields:
        write_points(out / "field_pred.csv", ev.points, names,
                     {"u_pred": pred, "u_exact": ev.values, "abs_err": np.abs(pred - ev.values)})


def run_single(cfg: ExperimentConfig, problem: PdeProblem, net: Network, ts: TrainingSet,
               acfg: AdaptiveConfig, out: Path | None, log=None) -> tuple[MetricsReport, AdaptiveTrace, Network]:
    ckpt = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out
    net, trace, _ = run_fi_pinn(problem, net, ts, acfg, checkpoint_dir=ckpt, log=log)
    ev, pred, rel, max_abs = _evaluate(problem, net)
    report = MetricsReport(
        relative_l2=rel, max_abs_error=max_abs, strategy=acfg.strategy, seed=acfg.seed,
        trace=trace.to_dict(), config=cfg.to_dict(), versions=versions(),
        timing={"round_seconds": [r.seconds for r in trace.records]},
    )
    if out is not None:
        _write_outputs(out, cfg, problem, net, trace, report, ev, pred)
    return report, trace, net


def run_experiment(cfg: ExperimentConfig, log: Callable[[str], None] | None = None) -> MetricsReport:
    """One strategy, one seed (``cfg.seed``); outputs go to ``cfg.out``."""
    problem = cfg.build_problem()
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    net, ts = pretrain(cfg, problem, cfg.seed, log)
    report, _, _ = run_single(cfg, problem, net, ts, cfg.adaptive(cfg.seed), out, log)
    return report


@dataclass
class ComparisonResult:
    reports: dict  # strategy -> list of MetricsReport (one per seed)
    traces: dict  # strategy -> list of AdaptiveTrace

    def finals(self, strategy: str) -> list[float]:
        return [r.relative_l2 for r in self.reports[strategy]]

    def median(self, strategy: str) -> float:
        return float(np.median(self.finals(strategy)))

    def summary(self) -> dict:
        return {
            s: {"median_rel_l2": self.median(s), "mean_rel_l2": float(np.mean(self.finals(s))),
                "per_seed": self.finals(s), "seeds": [r.seed for r in self.reports[s]],
                "rounds": [len(r.trace["rounds"]) for r in self.reports[s]]}
            for s in self.reports
        }


def run_comparison(cfg: ExperimentConfig, strategies=("sais", "uniform", "rar"), seeds=None,
                   log: Callable[[str], None] | None = None, write: bool = True) -> ComparisonResult:
    """Failure-informed run first, then baselines with matching per-round point counts."""
    problem = cfg.build_problem()
    seeds = cfg.seeds if seeds is None else list(seeds)
    lead, rest = strategies[0], list(strategies[1:])
    reports = {s: [] for s in strategies}
    traces = {s: [] for s in strategies}
    base = Path(cfg.out)
    for seed in seeds:
        net0, ts0 = pretrain(cfg, problem, seed, log)
        lead_cfg = cfg.adaptive(seed, lead)
        out = base / f"seed_{seed}" / lead if write else None
        rep, tr, _ = run_single(cfg, problem, net0, ts0, lead_cfg, out, log)
        reports[lead].append(rep)
        traces[lead].append(tr)
        for s in rest:
            bcfg = baseline_config(lead_cfg, tr, s)
            out = base / f"seed_{seed}" / s if write else None
            rep_b, tr_b, _ = run_single(cfg, problem, net0, ts0, bcfg, out, log)
            reports[s].append(rep_b)
            traces[s].append(tr_b)
    result = ComparisonResult(reports, traces)
    if write:
        base.mkdir(parents=True, exist_ok=True)
        (base / "summary.json").write_text(json.dumps(result.summary(), indent=2))
    return result


@dataclass
class ConvergenceResult:
    axis: str
    tolerances: list
    errors: list
    slope: float
    intercept: float
    residual: float
    per_seed: list

    def to_dict(self) -> dict:
        return asdict(self)


def fit_loglog(tolerances, errors) -> tuple[float, float, float]:
    """Least-squares slope and intercept of ``log(error)`` against ``log(tolerance)``, and RMS residual."""
    x, y = np.log(np.asarray(tolerances, float)), np.log(np.asarray(errors, float))
    if x.size < 3:
        raise ValueError("need at least three tolerance values")
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), resid


def convergence_study(cfg: ExperimentConfig, axis: str, tolerances, seeds=None,
                      log: Callable[[str], None] | None = None) -> ConvergenceResult:
    """Final error of the failure-informed run per tolerance value; slope of the log-log fit.

    The other tolerance stays at its configured value.  Each seed is
    pretrained once and reused for every tolerance.
    """
    if axis not in ("eps_p", "eps_r"):
        raise ValueError("axis must be eps_p or eps_r")
    tolerances = [float(t) for t in tolerances]
    if len(tolerances) < 3:
        raise ValueError("need at least three tolerance values")
    if max(tolerances) / min(tolerances) < 10.0 * (1 - 1e-12):
        raise ValueError("tolerances must span at least one decade")
    problem = cfg.build_problem()
    seeds = cfg.seeds if seeds is None else list(seeds)
    per_seed = []
    for seed in seeds:
        net0, ts0 = pretrain(cfg, problem, seed, log)
        row = []
        for tol in tolerances:
            acfg = replace(cfg.adaptive(seed, "sais"), **{axis: tol})
            net, trace, _ = run_fi_pinn(problem, net0, ts0, acfg, log=log)
            row.append(_evaluate(problem, net)[2])
        per_seed.append(row)
    errors = np.median(np.asarray(per_seed), axis=0).tolist()
    slope, intercept, resid = fit_loglog(tolerances, errors)
    return ConvergenceResult(axis, tolerances, errors, slope, intercept, resid, per_seed)


# ---------------------------------------------------------------------------
# presets


def preset_names(suite: str | None = None) -> list[str]:
    names = sorted(p.name[:-5] for p in resources.files("fipinn.presets").iterdir() if p.name.endswith(".json"))
    if suite is not None:
        names = [n for n in names if n.endswith("_" + suite)]
    return names


def load_preset(name: str) -> ExperimentConfig:
    text = resources.files("fipinn.presets").joinpath(name + ".json").read_text()
    return ExperimentConfig.from_dict(json.loads(text))


def run_suite(suite: str, out_root="runs/bench", log=None) -> dict:
    """Run every preset of a suite as a strategy comparison; returns per-preset summaries."""
    if suite not in ("desk", "full"):
        raise ValueError("suite must be desk or full")
    summaries = {}
    for name in preset_names(suite):
        cfg = load_preset(name)
        cfg = replace(cfg, out=str(Path(out_root) / name))
        strategies = ["sais"] + [s for s in cfg.compare if s != "sais"]
        res = run_comparison(cfg, strategies, log=log)
        summaries[name] = res.summary()
    Path(out_root).mkdir(parents=True, exist_ok=True)
    (Path(out_root) / f"{suite}_summary.json").write_text(json.dumps(summaries, indent=2))
    return summaries
