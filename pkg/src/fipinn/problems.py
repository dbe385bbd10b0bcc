"""PDE problem catalog: residual and boundary operators on top of :mod:`fipinn.nn`.

Every problem exposes its residual ``r(x; theta)`` as a function of the
jets ``u``, ``grad u`` and a small set of second-order channels.  The
operator also returns the partial derivatives of ``r`` with respect to those
jets, which is all that reverse accumulation needs to produce parameter
gradients of any loss built from residuals.

Coordinates of time-dependent problems are ordered ``(x, t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .distributions import Proposal, TruncatedGaussian, UniformBox, _rejection
from .domains import DomainSpec, box, in_star, star_curve
from .nn import Network, forward, record
from .reference import BURGERS_NU, load_table

ALLEN_CAHN_DIFFUSION = 1e-4


@dataclass(frozen=True)
class Residual:
    """Residual values with partials w.r.t. ``u`` (N,), ``grad u`` (N, d) and second channels (N, Q).

    A partial given as ``None`` is identically zero.
    """

    r: np.ndarray
    du: np.ndarray | None = None
    dgrad: np.ndarray | None = None
    dsecond: np.ndarray | None = None


@dataclass(frozen=True)
class Operator:
    """Differential operator: second-order channel matrices plus a pointwise rule."""

    second: tuple[np.ndarray, ...]
    apply: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], Residual]


@dataclass(frozen=True)
class BoundaryCondition:
    """One family of boundary or initial constraints.

    ``kind`` is ``dirichlet`` (``u - target``), ``periodic_value``
    (``u(x) - u(mirror(x))``) or ``periodic_slope`` (same for ``du/dx_0``).
    ``share`` is the fraction of the boundary budget drawn from ``sampler``.
    """

    name: str
    kind: str
    sampler: Callable[[int, np.random.Generator], np.ndarray]
    share: float = 1.0
    target: Callable[[np.ndarray], np.ndarray] | None = None
    mirror: Callable[[np.ndarray], np.ndarray] | None = None

    def residual(self, net: Network, X: np.ndarray) -> np.ndarray:
        return self.pullback(net, X)[0]

    def pullback(self, net: Network, X: np.ndarray):
        """Return ``b`` at ``X`` and a map from cotangents ``(N,)`` to parameter gradients."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n = X.shape[0]
        if self.kind == "dirichlet":
            tape = record(net, X, "value")
            b = tape.value - self.target(X)
            return b, lambda cot: tape.backward(adj_value=cot)
        both = np.concatenate([X, self.mirror(X)])
        if self.kind == "periodic_value":
            tape = record(net, both, "value")
            u = tape.value
            b = u[:n] - u[n:]
            return b, lambda cot: tape.backward(adj_value=np.concatenate([cot, -cot]))
        if self.kind == "periodic_slope":
            tape = record(net, both, "grad")
            ux = tape.grad[:, 0]
            b = ux[:n] - ux[n:]

            def pull(cot):
                adj = np.zeros((2 * n, X.shape[1]))
                adj[:n, 0] = cot
                adj[n:, 0] = -cot
                return tape.backward(adj_grad=adj)

            return b, pull
        raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass(frozen=True)
class EvaluationSet:
    points: np.ndarray
    values: np.ndarray
    description: str


@dataclass(frozen=True)
class PdeProblem:
    """A PDE with its domain, operators, prior and optional exact solution."""

    name: str
    dim: int
    domain: DomainSpec
    operator: Operator
    conditions: tuple[BoundaryCondition, ...]
    prior: Proposal
    initial_sampler: Callable[[int, np.random.Generator], np.ndarray]
    forcing: Callable[[np.ndarray], np.ndarray]
    exact_solution: Callable[[np.ndarray], np.ndarray] | None = None
    time_axis: int | None = None
    time_interval: tuple[float, float] | None = None
    evaluation: Callable[[], EvaluationSet] | None = None
    params: dict = field(default_factory=dict)

    @property
    def is_time_dependent(self) -> bool:
        return self.time_axis is not None

    def jets(self, net: Network, X):
        return record(net, X, second=self.operator.second)

    def residual(self, net: Network, x) -> np.ndarray | float:
        """``r(x; theta)`` for a single point or a batch of shape ``(N, d)``."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        r = self.residual_pullback(net, np.atleast_2d(x))[0]
        return float(r[0]) if single else r

    def residual_pullback(self, net: Network, X: np.ndarray):
        """Residuals at ``X`` and a map from cotangents ``(N,)`` to parameter gradients."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"points have dimension {X.shape[1]}, problem needs {self.dim}")
        tape = self.jets(net, X)
        res = self.operator.apply(X, tape.value, tape.grad, tape.second)

        def pull(cot):
            cot = np.asarray(cot, dtype=np.float64)
            return tape.backward(
                None if res.du is None else cot * res.du,
                None if res.dgrad is None else cot[:, None] * res.dgrad,
                None if res.dsecond is None else cot[:, None] * res.dsecond,
            )

        return res.r, pull

    def boundary_residual(self, net: Network, X, kind: np.ndarray | int = 0) -> np.ndarray:
        """``b(x; theta)``; ``kind`` indexes :attr:`conditions` per point."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        kind = np.broadcast_to(np.asarray(kind), (X.shape[0],))
        out = np.empty(X.shape[0])
        for k, cond in enumerate(self.conditions):
            sel = kind == k
            if np.any(sel):
                out[sel] = cond.residual(net, X[sel])
        return out

    def sample_boundary(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Split ``n`` boundary points across the conditions by share; returns points and kinds."""
        shares = np.array([c.share for c in self.conditions], dtype=np.float64)
        counts = np.floor(n * shares / shares.sum()).astype(int)
        counts[0] += n - counts.sum()
        pts, kinds = [], []
        for k, (cond, m) in enumerate(zip(self.conditions, counts)):
            pts.append(cond.sampler(int(m), rng).reshape(int(m), self.dim))
            kinds.append(np.full(int(m), k))
        return np.concatenate(pts), np.concatenate(kinds)

    def sample_interior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.initial_sampler(n, rng)

    def evaluation_set(self) -> EvaluationSet:
        if self.evaluation is None:
            raise ValueError(f"problem {self.name!r} has no evaluation set")
        return self.evaluation()

    def predict(self, net: Network, X) -> np.ndarray:
        return forward(net, np.atleast_2d(X))


# ---------------------------------------------------------------------------
# operator rules


def _poisson(forcing):
    """``r = -lap u - f`` with a single Laplacian channel."""

    def apply(X, u, G, S):
        return Residual(-S[:, 0] - forcing(X), dsecond=np.full((X.shape[0], 1), -1.0))

    return apply


def _second_x(d: int) -> tuple[np.ndarray, ...]:
    S = np.zeros((d, d))
    S[0, 0] = 1.0
    return (S,)


def _burgers(X, u, G, S):
    ux, ut, uxx = G[:, 0], G[:, 1], S[:, 0]
    dgrad = np.stack([u, np.ones_like(u)], axis=1)
    return Residual(ut + u * ux - BURGERS_NU * uxx, du=ux, dgrad=dgrad,
                    dsecond=np.full((u.size, 1), -BURGERS_NU))


def _heat(forcing):
    """``r = u_t - u_xx - f``."""

    def apply(X, u, G, S):
        dgrad = np.zeros_like(G)
        dgrad[:, 1] = 1.0
        return Residual(G[:, 1] - S[:, 0] - forcing(X), dgrad=dgrad,
                        dsecond=np.full((u.size, 1), -1.0))

    return apply


def _allen_cahn(X, u, G, S):
    dgrad = np.zeros_like(G)
    dgrad[:, 1] = 1.0
    r = G[:, 1] - ALLEN_CAHN_DIFFUSION * S[:, 0] + 5.0 * u ** 3 - 5.0 * u
    return Residual(r, du=15.0 * u ** 2 - 5.0, dgrad=dgrad,
                    dsecond=np.full((u.size, 1), -ALLEN_CAHN_DIFFUSION))


def _zero(X):
    return np.zeros(np.atleast_2d(X).shape[0])


# ---------------------------------------------------------------------------
# samplers and evaluation sets


def _face_sampler(domain: DomainSpec, faces):
    sub = DomainSpec(domain.kind, domain.bounds, False, tuple(faces))
    return lambda n, rng: sub.sample_boundary(n, rng) if n else np.empty((0, domain.dim))


def _box_sampler(lower, upper, exclude_star: bool = False):
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)

    def draw(n, rng):
        if not exclude_star:
            return rng.uniform(lower, upper, size=(n, lower.size))
        if n == 0:
            return np.empty((0, lower.size))
        return _rejection(lambda m: rng.uniform(lower, upper, size=(m, lower.size)),
                          lambda Y: ~in_star(Y), n, rng, 1000, "star-excluded box")

    return draw


def _tensor_grid(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _grid_eval(exact, lower, upper, n_per_axis):
    def build():
        axes = [np.linspace(a, b, n) for a, b, n in zip(lower, upper, n_per_axis)]
        X = _tensor_grid(axes)
        return EvaluationSet(X, exact(X), f"tensor grid {'x'.join(map(str, n_per_axis))}")

    return build


def _random_eval(exact, d, n=10_000, seed=20_221):
    def build():
        X = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, d))
        return EvaluationSet(X, exact(X), f"{n} uniform points in [-1,1]^{d}")

    return build


def _disk_eval(exact, radius=10.0, n=10_000, seed=7):
    def build():
        H = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
        r = radius * np.sqrt(H[:, 0])
        phi = 2.0 * np.pi * H[:, 1]
        X = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        X = X[~in_star(X)]
        return EvaluationSet(X, exact(X), f"Halton points on the disk of radius {radius:g}")

    return build


def _table_eval(name):
    def build():
        X, u = load_table(name)
        return EvaluationSet(X, u, f"reference table {name}")

    return build


# ---------------------------------------------------------------------------
# catalog


def peak_solution(X, centers=((0.5, 0.5),), k: float = 1000.0):
    X = np.atleast_2d(X)
    return sum(np.exp(-k * np.sum((X - np.asarray(c)) ** 2, axis=1)) for c in centers)


def peak_forcing(X, centers=((0.5, 0.5),), k: float = 1000.0):
    """``-lap`` of ``exp(-k |x-c|^2)`` in 2D is ``(4k - 4k^2 |x-c|^2) exp(...)``."""
    X = np.atleast_2d(X)
    out = np.zeros(X.shape[0])
    for c in centers:
        s = np.sum((X - np.asarray(c)) ** 2, axis=1)
        out += (4.0 * k - 4.0 * k * k * s) * np.exp(-k * s)
    return out


def _peak_problem(name, centers, k):
    if k <= 0:
        raise ValueError("peak sharpness k must be positive")
    dom = box(2)
    exact = lambda X: peak_solution(X, centers, k)
    forcing = lambda X: peak_forcing(X, centers, k)
    bc = BoundaryCondition("dirichlet", "dirichlet", _face_sampler(dom, dom.boundary_faces), target=exact)
    return PdeProblem(
        name=name, dim=2, domain=dom, operator=Operator((np.eye(2),), _poisson(forcing)),
        conditions=(bc,), prior=UniformBox.on(dom), initial_sampler=_box_sampler(dom.lower, dom.upper),
        forcing=forcing, exact_solution=exact,
        evaluation=_grid_eval(exact, dom.lower, dom.upper, (256, 256)),
        params={"centers": [list(c) for c in centers], "k": k},
    )


def poisson_peak_2d(k: float = 1000.0) -> PdeProblem:
    """``-lap u = f`` on ``[-1,1]^2`` with a peak ``exp(-k |x - (0.5, 0.5)|^2)``."""
    return _peak_problem("poisson_peak_2d", ((0.5, 0.5),), float(k))


def poisson_two_peak_2d(k: float = 1000.0) -> PdeProblem:
    """Two peaks at ``(0.5, 0.5)`` and ``(-0.5, -0.5)``."""
    return _peak_problem("poisson_two_peak_2d", ((0.5, 0.5), (-0.5, -0.5)), float(k))


def burgers_1d() -> PdeProblem:
    """``u_t + u u_x - nu u_xx = 0`` with ``u(x,0) = -sin(pi x)`` and ``u(+-1,t) = 0``."""
    dom = DomainSpec("box", ((-1.0, 1.0), (0.0, 1.0)), False, ((0, 0), (0, 1), (1, 0)))
    ic = BoundaryCondition("initial", "dirichlet", _face_sampler(dom, [(1, 0)]), share=0.5,
                           target=lambda X: -np.sin(np.pi * X[:, 0]))
    walls = BoundaryCondition("walls", "dirichlet", _face_sampler(dom, [(0, 0), (0, 1)]), share=0.5,
                              target=_zero)
    return PdeProblem(
        name="burgers_1d", dim=2, domain=dom, operator=Operator(_second_x(2), _burgers),
        conditions=(ic, walls), prior=UniformBox.on(dom), initial_sampler=_box_sampler(dom.lower, dom.upper),
        forcing=_zero, time_axis=1, time_interval=(0.0, 1.0),
        evaluation=_table_eval("burgers_reference.csv"), params={"nu": BURGERS_NU},
    )


def radial_solution(X):
    X = np.atleast_2d(X)
    return np.exp(-10.0 * np.sum(X ** 2, axis=1))


def radial_forcing(X):
    X = np.atleast_2d(X)
    s = np.sum(X ** 2, axis=1)
    return (20.0 * X.shape[1] - 400.0 * s) * np.exp(-10.0 * s)


def poisson_highdim(d: int = 9) -> PdeProblem:
    """``-lap u = f`` on ``[-1,1]^d`` with ``u = exp(-10 |x|^2)``."""
    if d < 1:
        raise ValueError("dimension must be positive")
    dom = box(d)
    bc = BoundaryCondition("dirichlet", "dirichlet", _face_sampler(dom, dom.boundary_faces),
                           target=radial_solution)
    return PdeProblem(
        name="poisson_highdim", dim=d, domain=dom, operator=Operator((np.eye(d),), _poisson(radial_forcing)),
        conditions=(bc,), prior=UniformBox.on(dom), initial_sampler=_box_sampler(dom.lower, dom.upper),
        forcing=radial_forcing, exact_solution=radial_solution,
        evaluation=_random_eval(radial_solution, d), params={"d": d},
    )


def offset_solution(X):
    X = np.atleast_2d(X)
    return np.exp(-np.sum((X - 4.0) ** 2, axis=1))


def offset_forcing(X):
    X = np.atleast_2d(X)
    s = np.sum((X - 4.0) ** 2, axis=1)
    return (4.0 - 4.0 * s) * np.exp(-s)


def poisson_unbounded_2d(prior_var: float = 3.0, z_seed: int = 0) -> PdeProblem:
    """``-lap u = f`` outside the five-lobed star, with a bump centred at ``(4, 4)``."""
    inf = np.inf
    dom = DomainSpec("box_minus_star", ((-inf, inf), (-inf, inf)), True, ())
    bc = BoundaryCondition("star", "dirichlet", lambda n, rng: star_curve(rng.uniform(0, 2 * np.pi, n)),
                           target=offset_solution)
    prior = TruncatedGaussian(np.zeros(2), prior_var * np.eye(2), dom, z_seed=z_seed)
    return PdeProblem(
        name="poisson_unbounded_2d", dim=2, domain=dom, operator=Operator((np.eye(2),), _poisson(offset_forcing)),
        conditions=(bc,), prior=prior, initial_sampler=_box_sampler([-2, -2], [2, 2], exclude_star=True),
        forcing=offset_forcing, exact_solution=offset_solution,
        evaluation=_disk_eval(offset_solution), params={"prior_var": prior_var},
    )


def heat_solution(X):
    X = np.atleast_2d(X)
    x, t = X[:, 0], X[:, 1]
    return np.exp(-(x - 10.0) ** 2 / (4.0 * t + 4.0)) / np.sqrt(t + 1.0)


def heat_unbounded_1d(prior_var: float = 3.0, ic_range=(-10.0, 20.0), z_seed: int = 0) -> PdeProblem:
    """``u_t = u_xx + f`` on ``R x [0, 1]``; ``f = 0`` since ``u`` is a shifted heat kernel."""
    inf = np.inf
    dom = DomainSpec("halfplane_time_strip", ((-inf, inf), (0.0, 1.0)), False, ((1, 0),))
    lo, hi = ic_range

    def ic_points(n, rng):
        return np.stack([rng.uniform(lo, hi, n), np.zeros(n)], axis=1)

    ic = BoundaryCondition("initial", "dirichlet", ic_points, target=heat_solution)
    prior = TruncatedGaussian(np.zeros(2), prior_var * np.eye(2), dom, z_seed=z_seed)
    return PdeProblem(
        name="heat_unbounded_1d", dim=2, domain=dom, operator=Operator(_second_x(2), _heat(_zero)),
        conditions=(ic,), prior=prior, initial_sampler=_box_sampler([-6.0, 0.0], [0.0, 1.0]),
        forcing=_zero, exact_solution=heat_solution, time_axis=1, time_interval=(0.0, 1.0),
        evaluation=_grid_eval(heat_solution, (lo, 0.0), (hi, 1.0), (301, 51)),
        params={"prior_var": prior_var, "ic_range": [lo, hi]},
    )


def allen_cahn_1d() -> PdeProblem:
    """``u_t - 1e-4 u_xx + 5u^3 - 5u = 0``, ``u(x,0) = x^2 cos(pi x)``, periodic in ``x``."""
    dom = DomainSpec("box", ((-1.0, 1.0), (0.0, 1.0)), False, ((1, 0),))
    ic = BoundaryCondition("initial", "dirichlet", _face_sampler(dom, [(1, 0)]), share=0.5,
                           target=lambda X: X[:, 0] ** 2 * np.cos(np.pi * X[:, 0]))

    def left_wall(n, rng):
        return np.stack([np.full(n, -1.0), rng.uniform(0.0, 1.0, n)], axis=1)

    def mirror(X):
        Y = X.copy()
        Y[:, 0] = -Y[:, 0]
        return Y

    per_u = BoundaryCondition("periodic_u", "periodic_value", left_wall, share=0.25, mirror=mirror)
    per_ux = BoundaryCondition("periodic_ux", "periodic_slope", left_wall, share=0.25, mirror=mirror)
    return PdeProblem(
        name="allen_cahn_1d", dim=2, domain=dom, operator=Operator(_second_x(2), _allen_cahn),
        conditions=(ic, per_u, per_ux), prior=UniformBox.on(dom),
        initial_sampler=_box_sampler(dom.lower, dom.upper), forcing=_zero,
        time_axis=1, time_interval=(0.0, 1.0), evaluation=_table_eval("allen_cahn_reference.csv"),
        params={"diffusion": ALLEN_CAHN_DIFFUSION},
    )


CATALOG: dict[str, Callable[..., PdeProblem]] = {
    "poisson_peak_2d": poisson_peak_2d,
    "poisson_two_peak_2d": poisson_two_peak_2d,
    "burgers_1d": burgers_1d,
    "poisson_highdim": poisson_highdim,
    "poisson_unbounded_2d": poisson_unbounded_2d,
    "heat_unbounded_1d": heat_unbounded_1d,
    "allen_cahn_1d": allen_cahn_1d,
}


def get_problem(problem_id: str, **kwargs) -> PdeProblem:
    try:
        factory = CATALOG[problem_id]
    except KeyError:
        raise KeyError(f"unknown problem id {problem_id!r}; known: {sorted(CATALOG)}") from None
    return factory(**kwargs)
