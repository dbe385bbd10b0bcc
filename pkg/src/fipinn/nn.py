"""Dense tanh networks with exact input derivatives and parameter gradients.

Input derivatives (gradient and Hessian, diagonal or full) are carried
forward alongside the activations as *jet channels*.  Parameter gradients
are obtained by running reverse accumulation back through that same jet
computation, so any residual built from ``u``, ``grad u`` and second
derivatives can be differentiated exactly with respect to the weights.

Parameter layout
----------------
The flat parameter vector stores the layers in order.  For a layer mapping
``w_in -> w_out`` the block is the weight matrix of shape ``(w_in, w_out)``
in row-major order followed by the ``w_out`` biases::

    [W_1.ravel(), b_1, W_2.ravel(), b_2, ..., W_L.ravel(), b_L]

A layer evaluates ``h @ W + b``.  All hidden layers apply ``tanh``; the
final layer is affine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels

MODES = ("value", "grad", "hess_diag", "hess_full")


class ConfigurationError(ValueError):
    """Raised for invalid network or run configuration."""


@dataclass
class Network:
    """Feed-forward tanh network ``u(x; theta)`` with a flat parameter vector."""

    layer_widths: tuple[int, ...]
    params: np.ndarray
    activation: str = "tanh"
    seed: int | None = None

    def __post_init__(self):
        self.layer_widths = tuple(int(w) for w in self.layer_widths)
        _check_widths(self.layer_widths)
        if self.activation != "tanh":
            raise ConfigurationError(f"unsupported activation {self.activation!r}")
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (n_params(self.layer_widths),):
            raise ConfigurationError(
                f"expected {n_params(self.layer_widths)} parameters, got {self.params.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def n_params(self) -> int:
        return self.params.size

    def layers(self, params: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` into ``params`` (defaults to this network's)."""
        return _unflatten(self.layer_widths, self.params if params is None else params)

    def with_params(self, params: np.ndarray) -> "Network":
        return Network(self.layer_widths, np.array(params, dtype=np.float64), self.activation, self.seed)

    def copy(self) -> "Network":
        return self.with_params(self.params.copy())

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)

    # checkpoints -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layer_widths": list(self.layer_widths),
            "activation": self.activation,
            "seed": self.seed,
            # repr() of a Python float is the shortest round-trip decimal
            "params": [float(p) for p in self.params],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        return cls(
            tuple(data["layer_widths"]),
            np.asarray(data["params"], dtype=np.float64),
            data.get("activation", "tanh"),
            data.get("seed"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_widths(widths: Sequence[int]) -> None:
    if len(widths) < 2:
        raise ConfigurationError("need at least input and output widths")
    if any(w <= 0 for w in widths):
        raise ConfigurationError(f"layer widths must be positive, got {list(widths)}")
    if widths[-1] != 1:
        raise ConfigurationError("output width must be 1 (scalar field)")


def n_params(layer_widths: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(layer_widths[:-1], layer_widths[1:]))


def _unflatten(widths, params):
    out = []
    pos = 0
    for a, b in zip(widths[:-1], widths[1:]):
        W = params[pos:pos + a * b].reshape(a, b)
        pos += a * b
        out.append((W, params[pos:pos + b]))
        pos += b
    return out


def init_network(layer_widths: Sequence[int], seed: int) -> Network:
    """Glorot-uniform weights, ``U(-sqrt(6/(fan_in+fan_out)), +...)``, zero biases."""
    widths = tuple(int(w) for w in layer_widths)
    _check_widths(widths)
    rng = np.random.default_rng(seed)
    chunks = []
    for a, b in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (a + b))
        chunks.append(rng.uniform(-bound, bound, size=a * b))
        chunks.append(np.zeros(b))
    return Network(widths, np.concatenate(chunks), "tanh", seed)


# ---------------------------------------------------------------------------
# jet propagation


@dataclass
class Jet2:
    """Value, input gradient and second derivatives of ``u`` at one point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray | None = None  # (d,) diagonal or (d, d) full
    full: bool = False


@dataclass
class JetBatch:
    """Batched jets; ``hess`` is ``(N, d)`` (diagonal) or ``(N, d, d)`` (full)."""

    value: np.ndarray
    grad: np.ndarray | None
    hess: np.ndarray | None
    mode: str


def _second_order_terms(d: int, mode: str, second=None):
    """Sparse coefficient lists describing each second-order channel.

    Channel ``q`` carries ``sum_ab S_q[a, b] * d2u/dx_a dx_b``; the lists hold
    the nonzero ``(q, a, b, S_q[a, b])``.
    """
    if second is not None:
        mats = [np.asarray(S, dtype=np.float64) for S in second]
        if any(S.shape != (d, d) for S in mats):
            raise ValueError(f"second-order operators must be {d}x{d}")
    elif mode == "hess_diag":
        mats = [np.outer(e, e) for e in np.eye(d)]
    elif mode == "hess_full":
        a, b = np.triu_indices(d)
        mats = []
        for i, j in zip(a, b):
            S = np.zeros((d, d))
            S[i, j] = 1.0
            mats.append(S)
    else:
        mats = []
    tq, ta, tb, tc = [], [], [], []
    for q, S in enumerate(mats):
        for i, j in zip(*np.nonzero(S)):
            tq.append(q)
            ta.append(i)
            tb.append(j)
            tc.append(S[i, j])
    return (
        len(mats),
        np.asarray(tq, dtype=np.int64),
        np.asarray(ta, dtype=np.int64),
        np.asarray(tb, dtype=np.int64),
        np.asarray(tc, dtype=np.float64),
    )


@dataclass
class JetTape:
    """Forward jet pass with the intermediates needed for reverse accumulation.

    Channel layout along axis 0 is ``[value, d/dx_1 .. d/dx_d, second-order]``
    (the derivative block is absent in ``value`` mode).
    """

    net: Network
    mode: str
    X: np.ndarray
    n_first: int
    terms: tuple
    caches: list = field(default_factory=list)
    last_input: np.ndarray | None = None  # channels entering the output layer
    out: np.ndarray | None = None  # (K, N) final channels

    @property
    def value(self) -> np.ndarray:
        return self.out[0]

    @property
    def grad(self) -> np.ndarray:
        return self.out[1:1 + self.n_first].T

    @property
    def second(self) -> np.ndarray:
        """Second-order channels, shape ``(N, Q)``."""
        return self.out[1 + self.n_first:].T

    @property
    def hess(self) -> np.ndarray | None:
        if self.mode == "hess_diag":
            return self.second
        if self.mode == "hess_full":
            N, d = self.X.shape
            a, b = np.triu_indices(d)
            H = np.empty((N, d, d))
            hp = self.second
            H[:, a, b] = hp
            H[:, b, a] = hp
            return H
        return None

    def jets(self) -> JetBatch:
        grad = self.grad if self.n_first else None
        return JetBatch(self.value, grad, self.hess, self.mode)

    def backward(self, adj_value=None, adj_grad=None, adj_second=None) -> np.ndarray:
        """Gradient w.r.t. params of ``sum(adj_value*u + adj_grad*grad u + adj_second*second)``.

        ``adj_second`` is indexed like :attr:`second` (diagonal entries in
        ``hess_diag`` mode, upper-triangle pairs in ``hess_full`` mode).
        """
        N, d = self.X.shape
        K = self.out.shape[0]
        cot = np.zeros((K, N))
        if adj_value is not None:
            cot[0] = adj_value
        if adj_grad is not None:
            if not self.n_first:
                raise ValueError("gradient adjoint needs a derivative mode")
            cot[1:1 + d] = np.asarray(adj_grad).T
        if adj_second is not None:
            if K == 1 + self.n_first:
                raise ValueError("second-order adjoint needs a Hessian mode")
            cot[1 + self.n_first:] = np.asarray(adj_second).T
        return _backward(self, cot[:, :, None])


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"expected points of dimension {net.input_dim}, got shape {np.shape(x)}")
    return X, single


def record(net: Network, X, mode: str = "hess_diag", second=None) -> JetTape:
    """Run the jet forward pass on a batch ``X`` of shape ``(N, d)``.

    ``second`` optionally replaces the Hessian channels by custom linear
    combinations, e.g. ``[np.eye(d)]`` carries only the Laplacian.
    """
    if mode not in MODES and second is None:
        raise ValueError(f"unknown mode {mode!r}")
    X, _ = _as_batch(net, X)
    N, d = X.shape
    if second is not None:
        mode = "custom"
    terms = _second_order_terms(d, mode, second)
    Q = terms[0]
    n_first = 0 if mode == "value" else d
    K = 1 + n_first + Q
    tape = JetTape(net, mode, X, n_first, terms)

    C = np.zeros((K, N, d))
    C[0] = X
    for j in range(n_first):
        C[1 + j, :, j] = 1.0

    layers = net.layers()
    for li, (W, b) in enumerate(layers):
        Z = _affine(C, W, b)
        if li == len(layers) - 1:
            tape.last_input = C
            tape.out = Z[:, :, 0]
            break
        T = np.tanh(Z[0])
        if K == 1:
            O = T[None]
        else:
            O = np.empty_like(Z)
            _kernels.tanh_jet_forward(Z, T, n_first, *terms[1:], O)
        tape.caches.append((C, Z, T))
        C = O
    return tape


def _affine(C, W, b):
    K, N, w_in = C.shape
    Z = np.empty((K, N, W.shape[1]))
    # channel 0 alone so the value path is bit-identical across modes
    Z[0] = C[0] @ W + b
    if K > 1:
        np.matmul(C[1:].reshape(-1, w_in), W, out=Z[1:].reshape((K - 1) * N, -1))
    return Z


def _backward(tape: JetTape, cot: np.ndarray) -> np.ndarray:
    layers = tape.net.layers()
    grads = [None] * len(layers)

    W, _ = layers[-1]
    grads[-1] = _affine_grads(tape.last_input, cot)
    Obar = cot @ W.T

    for li in range(len(layers) - 2, -1, -1):
        C, Z, T = tape.caches[li]
        if Z.shape[0] == 1:
            Zbar = Obar * (1.0 - T * T)
        else:
            Zbar = np.empty_like(Z)
            _kernels.tanh_jet_backward(Z, T, Obar, tape.n_first, *tape.terms[1:], Zbar)
        grads[li] = _affine_grads(C, Zbar)
        if li > 0:
            W, _ = layers[li]
            Obar = Zbar @ W.T

    return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])


def _affine_grads(C, Zbar):
    K, N, w_in = C.shape
    gW = C.reshape(-1, w_in).T @ Zbar.reshape(K * N, -1)
    gb = Zbar[0].sum(axis=0)
    return gW, gb


# ---------------------------------------------------------------------------
# public convenience API


def forward(net: Network, x) -> np.ndarray | float:
    """Evaluate ``u(x; theta)`` for one point ``(d,)`` or a batch ``(N, d)``."""
    X, single = _as_batch(net, x)
    H = X
    layers = net.layers()
    for W, b in layers[:-1]:
        H = np.tanh(H @ W + b)
    W, b = layers[-1]
    u = (H @ W + b)[:, 0]
    return float(u[0]) if single else u


def forward_jet(net: Network, x, mode: str = "hess_diag") -> Jet2 | JetBatch:
    """Value, gradient and (optionally) Hessian of the network at ``x``.

    A single point returns a :class:`Jet2`; a batch returns a :class:`JetBatch`.
    """
    if mode == "value":
        raise ValueError("forward_jet needs mode 'grad', 'hess_diag' or 'hess_full'")
    X, single = _as_batch(net, x)
    jets = record(net, X, mode).jets()
    if not single:
        return jets
    hess = None if jets.hess is None else jets.hess[0]
    return Jet2(float(jets.value[0]), jets.grad[0], hess, full=mode == "hess_full")


def param_gradient(net: Network, X, mode="grad", adj_value=None, adj_grad=None, adj_hess=None):
    """Exact parameter gradient of a loss that is linear in the jets at ``X``.

    The adjoint recipe for each point is given by ``adj_value`` ``(N,)``,
    ``adj_grad`` ``(N, d)`` and ``adj_hess`` (``(N, d)`` for ``hess_diag``),
    i.e. the partial derivatives of the scalar loss with respect to ``u``,
    ``grad u`` and the second derivatives at each point.
    """
    X, _ = _as_batch(net, X)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    return record(net, X, mode).backward(adj_value, adj_grad, adj_hess)
