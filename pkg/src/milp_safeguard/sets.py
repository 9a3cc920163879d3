"""Axis-aligned box geometry.

Hypercubes house every set in the toolkit: state/control feasible sets,
the center-zero uncertainty sets (via their half-width vectors), box
obstacles, and reachable-set over-approximations.  An empty intersection
is a first-class value (``None``), not an error: downstream encoders must
surface it as solver infeasibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


@dataclass(frozen=True)
class Hypercube:
    """Box [lo, hi] in R^n with lo <= hi elementwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.lo, "lo")
        hi = _as_vector(self.hi, "hi")
        if lo.shape != hi.shape:
            raise ValueError(f"lo/hi shape mismatch: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise ValueError(f"inverted bounds: lo={lo} hi={hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def contains_box(self, other: "Hypercube", tol: float = 0.0) -> bool:
        return bool(
            np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol)
        )

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Uniform samples; shape (dim,) if n is None else (n, dim)."""
        size = self.dim if n is None else (n, self.dim)
        return rng.uniform(self.lo, self.hi, size=size)

    def concat(self, other: "Hypercube") -> "Hypercube":
        return Hypercube(
            np.concatenate([self.lo, other.lo]), np.concatenate([self.hi, other.hi])
        )

    @staticmethod
    def point(x) -> "Hypercube":
        x = _as_vector(x, "x")
        return Hypercube(x, x.copy())


@dataclass(frozen=True)
class UnsafeRegion:
    """Union of box obstacles, all of the same dimension."""

    boxes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        boxes = tuple(self.boxes)
        dims = {b.dim for b in boxes}
        if len(dims) > 1:
            raise ValueError(f"obstacle dimensions differ: {sorted(dims)}")
        object.__setattr__(self, "boxes", boxes)

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    def contains_interior(self, x, tol: float = 0.0) -> bool:
        """True iff x lies in the open interior of some obstacle."""
        x = np.asarray(x, dtype=float)
        for b in self.boxes:
            if np.all(x > b.lo + tol) and np.all(x < b.hi - tol):
                return True
        return False


def intersect(a: Hypercube, b: Hypercube) -> Hypercube | None:
    """Componentwise intersection; None when empty."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    lo = np.maximum(a.lo, b.lo)
    hi = np.minimum(a.hi, b.hi)
    if np.any(lo > hi):
        return None
    return Hypercube(lo, hi)


def inflate(h: Hypercube, eps) -> Hypercube:
    """Minkowski sum with the center-zero box of half-widths eps >= 0."""
    eps = _as_vector(eps, "eps")
    if eps.shape[0] != h.dim:
        raise ValueError(f"dimension mismatch: {h.dim} vs {eps.shape[0]}")
    if np.any(eps < 0):
        raise ValueError(f"negative inflation: {eps}")
    return Hypercube(h.lo - eps, h.hi + eps)


def disjoint_from_region(h: Hypercube, unsafe: UnsafeRegion, tol: float = 0.0) -> bool:
    """True iff h overlaps no obstacle's interior.

    Boundary contact counts as disjoint: the separating inequalities in the
    MILP are non-strict, so the geometric predicate must agree.
    """
    for box in unsafe:
        if h.dim != box.dim:
            raise ValueError(f"dimension mismatch: {h.dim} vs {box.dim}")
        # Open-interior overlap requires strict overlap in every coordinate.
        if np.all(np.maximum(h.lo, box.lo) < np.minimum(h.hi, box.hi) - tol):
            return False
    return True


def measurement_box(y, eps_y, X: Hypercube) -> Hypercube | None:
    """Clamp [y - eps_y, y + eps_y] to X.

    None signals an inconsistent measurement: no state in X could have
    produced y under the assumed noise bound.
    """
    y = _as_vector(y, "y")
    eps_y = _as_vector(eps_y, "eps_y")
    if y.shape[0] != X.dim or eps_y.shape[0] != X.dim:
        raise ValueError("measurement/bound dimension mismatch")
    if np.any(eps_y < 0):
        raise ValueError(f"negative eps_y: {eps_y}")
    lo = np.maximum(X.lo, y - eps_y)
    hi = np.minimum(X.hi, y + eps_y)
    if np.any(lo > hi):
        return None
    return Hypercube(lo, hi)
