"""Geometric domain descriptions: membership, boundary predicates and samplers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def star_radius(phi):
    """Polar radius of the five-lobed star ``rho(t) = 1 - cos(5t)/4``."""
    return 1.0 - 0.25 * np.cos(5.0 * phi)


def star_curve(t):
    """Points ``(cos t - cos5t cos t / 4, sin t - cos5t sin t / 4)``, shape ``(n, 2)``."""
    t = np.asarray(t, dtype=np.float64)
    r = star_radius(t)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned bounds (possibly infinite), optionally minus the star hole.

    ``kind`` is one of ``box``, ``box_minus_star``, ``halfplane_time_strip``
    or ``unbounded``.  ``boundary_faces`` lists the ``(axis, side)`` box faces
    that belong to the Dirichlet boundary (``side`` 0 = lower, 1 = upper).
    """

    kind: str
    bounds: tuple[tuple[float, float], ...]
    star_hole: bool = False
    boundary_faces: tuple[tuple[int, int], ...] = ()

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=np.float64)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=np.float64)

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    @property
    def is_unconstrained(self) -> bool:
        """True when every point of R^d belongs to the domain."""
        return not self.star_hole and bool(
            np.all(np.isneginf(self.lower)) and np.all(np.isposinf(self.upper))
        )

    def volume(self) -> float:
        if not self.is_bounded or self.star_hole:
            raise ValueError(f"volume undefined for domain kind {self.kind!r}")
        return float(np.prod(self.upper - self.lower))

    def contains(self, X) -> np.ndarray:
        """Membership of the closed domain for each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        inside = np.all((X >= self.lower) & (X <= self.upper), axis=1)
        if self.star_hole:
            inside &= ~in_star(X[:, :2])
        return inside

    def on_boundary(self, X, tol: float = 1e-12) -> np.ndarray:
        """Whether each point lies on the Dirichlet boundary (faces or star curve)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        hit = np.zeros(X.shape[0], dtype=bool)
        for axis, side in self.boundary_faces:
            edge = self.bounds[axis][side]
            hit |= np.abs(X[:, axis] - edge) <= tol * max(1.0, abs(edge))
        if self.star_hole:
            r = np.hypot(X[:, 0], X[:, 1])
            hit |= np.abs(r - star_radius(np.arctan2(X[:, 1], X[:, 0]))) <= 1e-10
        return hit & np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=1)

    def sample_boundary(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform draws over the listed faces (by area), or the star curve by parameter."""
        if self.star_hole:
            return star_curve(rng.uniform(0.0, 2.0 * np.pi, size=n))
        if not self.boundary_faces:
            raise ValueError(f"domain {self.kind!r} has no boundary faces")
        lo, hi = self.lower, self.upper
        areas = []
        for axis, _ in self.boundary_faces:
            span = np.delete(hi - lo, axis)
            areas.append(np.prod(span) if span.size else 1.0)
        areas = np.asarray(areas, dtype=np.float64)
        face = rng.choice(len(self.boundary_faces), size=n, p=areas / areas.sum())
        X = rng.uniform(lo, hi, size=(n, self.dim))
        for k, (axis, side) in enumerate(self.boundary_faces):
            X[face == k, axis] = self.bounds[axis][side]
        return X

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bounds": [[float(a), float(b)] for a, b in self.bounds],
            "star_hole": self.star_hole,
            "boundary_faces": [list(f) for f in self.boundary_faces],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSpec":
        return cls(
            data["kind"],
            tuple((float(a), float(b)) for a, b in data["bounds"]),
            bool(data.get("star_hole", False)),
            tuple(tuple(f) for f in data.get("boundary_faces", ())),
        )


def in_star(X) -> np.ndarray:
    """Strict interior of the star (the excluded obstacle)."""
    X = np.atleast_2d(X)
    r = np.hypot(X[:, 0], X[:, 1])
    return r < star_radius(np.arctan2(X[:, 1], X[:, 0]))


def box(d: int, lo: float = -1.0, hi: float = 1.0) -> DomainSpec:
    faces = tuple((a, s) for a in range(d) for s in (0, 1))
    return DomainSpec("box", tuple((lo, hi) for _ in range(d)), False, faces)
