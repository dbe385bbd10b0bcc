"""Classical reference solvers for the problems without a closed-form solution.

The tables shipped in ``fipinn/data`` were produced by
``scripts/make_reference_tables.py`` with these functions.
"""

from __future__ import annotations

import csv
from functools import lru_cache
from importlib import resources

import numpy as np

BURGERS_NU = 0.01 / np.pi


def burgers_cole_hopf(x, t, nu: float = BURGERS_NU, half_width: float = 12.0, n_nodes: int = 4801):
    """Viscous Burgers with ``u(x,0) = -sin(pi x)`` via the Cole-Hopf integral.

    With ``eta = sqrt(4 nu t) z`` the solution is a ratio of two integrals
    against ``exp(-z^2)``; both are evaluated by the trapezoid rule on a
    dense ``z`` grid after removing the largest exponent.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t = float(t)
    if t == 0.0:
        return -np.sin(np.pi * x)
    c = np.sqrt(4.0 * nu * t)
    z = np.linspace(-half_width, half_width, n_nodes)
    y = x[:, None] - c * z[None, :]
    logf = -z[None, :] ** 2 - np.cos(np.pi * y) / (2.0 * np.pi * nu)
    logf -= logf.max(axis=1, keepdims=True)
    f = np.exp(logf)
    num = np.trapezoid(np.sin(np.pi * y) * f, z, axis=1)
    den = np.trapezoid(f, z, axis=1)
    return -num / den


def allen_cahn_etdrk4(n_x: int = 512, t_out=None, dt: float = 1e-5, diffusion: float = 1e-4):
    """``u_t = D u_xx + 5u - 5u^3`` on ``[-1, 1)`` periodic, ``u0 = x^2 cos(pi x)``.

    Fourier pseudo-spectral in space, ETDRK4 in time with the phi-function
    coefficients evaluated by contour integrals.  Returns ``(x, t_out, U)``
    with ``U[i, j] = u(x_j, t_i)``.
    """
    if t_out is None:
        t_out = np.linspace(0.0, 1.0, 201)
    t_out = np.asarray(t_out, dtype=np.float64)
    x = -1.0 + 2.0 * np.arange(n_x) / n_x
    u = x ** 2 * np.cos(np.pi * x)
    k = np.fft.fftfreq(n_x, d=2.0 / n_x) * 2.0 * np.pi
    L = -diffusion * k ** 2
    E = np.exp(dt * L)
    E2 = np.exp(dt * L / 2.0)
    n_contour = 64
    r = np.exp(1j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    LR = dt * L[:, None] + r[None, :]
    Q = dt * np.real(np.mean((np.exp(LR / 2.0) - 1.0) / LR, axis=1))
    f1 = dt * np.real(np.mean((-4.0 - LR + np.exp(LR) * (4.0 - 3.0 * LR + LR ** 2)) / LR ** 3, axis=1))
    f2 = dt * np.real(np.mean((2.0 + LR + np.exp(LR) * (-2.0 + LR)) / LR ** 3, axis=1))
    f3 = dt * np.real(np.mean((-4.0 - 3.0 * LR - LR ** 2 + np.exp(LR) * (4.0 - LR)) / LR ** 3, axis=1))

    def nonlin(v_hat):
        w = np.real(np.fft.ifft(v_hat))
        return np.fft.fft(5.0 * w - 5.0 * w ** 3)

    v = np.fft.fft(u)
    out = np.empty((t_out.size, n_x))
    t = 0.0
    i_out = 0
    n_steps = int(round(t_out[-1] / dt))
    for step in range(n_steps + 1):
        t = step * dt
        while i_out < t_out.size and abs(t - t_out[i_out]) < 0.5 * dt:
            out[i_out] = np.real(np.fft.ifft(v))
            i_out += 1
        if step == n_steps:
            break
        Nv = nonlin(v)
        a = E2 * v + Q * Nv
        Na = nonlin(a)
        b = E2 * v + Q * Na
        Nb = nonlin(b)
        c = E2 * a + Q * (2.0 * Nb - Nv)
        Nc = nonlin(c)
        v = E * v + Nv * f1 + 2.0 * (Na + Nb) * f2 + Nc * f3
    return x, t_out, out


def write_table(path, x, t, U) -> None:
    """Write ``U[i, j] = u(x_j, t_i)`` as CSV rows ``x,t,u``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "t", "u"])
        for i, ti in enumerate(t):
            for j, xj in enumerate(x):
                w.writerow([repr(float(xj)), repr(float(ti)), repr(float(U[i, j]))])


@lru_cache(maxsize=None)
def load_table(name: str) -> tuple[np.ndarray, np.ndarray]:
    """Load a shipped reference table; returns points ``(N, 2)`` as ``(x, t)`` and values."""
    with resources.files("fipinn.data").joinpath(name).open("r") as fh:
        data = np.loadtxt(fh, delimiter=",", skiprows=1)
    return data[:, :2].copy(), data[:, 2].copy()
