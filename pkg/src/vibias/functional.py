"""Functional specifications: polynomials, box-tail indicators, grid tables.

A functional is a real-valued map on the parameter space. Three concrete
representations are supported:

* :class:`Polynomial` — finite sum of monomials with real coefficients,
  exact on grids and exact under Gaussians (moment calculus).
* :class:`BoxTail` — indicator of a lower-orthant exceedance event
  ``1{theta_i > t_i for every active i}``.
* :class:`GridTable` — values tabulated on (a subset of) the axes of a
  companion grid measure; may depend on a subset of coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, AxesMismatch, VibiasError

Exponents = tuple[int, ...]


@dataclass(frozen=True)
class Polynomial:
    """Multivariate polynomial in canonical form.

    ``terms`` maps exponent tuples of length ``dims`` to nonzero
    coefficients. Duplicate exponent vectors are merged on construction and
    exact-zero coefficients dropped.
    """

    dims: int
    terms: dict[Exponents, float] = field(default_factory=dict)

    def __post_init__(self):
        merged: dict[Exponents, float] = {}
        for e, c in self.terms.items():
            e = tuple(int(x) for x in e)
            if len(e) != self.dims:
                raise DimensionMismatch(
                    f"exponent vector {e} has length {len(e)}, expected {self.dims}"
                )
            if any(x < 0 for x in e):
                raise DimensionMismatch(f"negative exponent in {e}")
            merged[e] = merged.get(e, 0.0) + float(c)
        object.__setattr__(
            self, "terms", {e: c for e, c in merged.items() if c != 0.0}
        )

    # ------------------------------------------------------------------ build
    @classmethod
    def from_terms(cls, dims: int, terms: Iterable[tuple[float, Sequence[int]]]):
        return cls(dims, _accumulate(dims, terms))

    @classmethod
    def zero(cls, dims: int) -> "Polynomial":
        return cls(dims, {})

    @classmethod
    def constant(cls, dims: int, value: float) -> "Polynomial":
        return cls(dims, {tuple([0] * dims): float(value)})

    @classmethod
    def monomial(cls, dims: int, coeff: float, exponents: Sequence[int]):
        return cls(dims, {tuple(int(x) for x in exponents): float(coeff)})

    @classmethod
    def coordinate(cls, dims: int, i: int) -> "Polynomial":
        e = [0] * dims
        e[i] = 1
        return cls(dims, {tuple(e): 1.0})

    # ------------------------------------------------------------- arithmetic
    def __add__(self, other: "Polynomial | float") -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.dims, other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.dims, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.dims, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Polynomial | float") -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.dims, other)
        return self + (-other)

    def __mul__(self, other: "Polynomial | float") -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial(self.dims, {e: c * other for e, c in self.terms.items()})
        out: dict[Exponents, float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.dims, out)

    __rmul__ = __mul__

    # ------------------------------------------------------------------ query
    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def support_coords(self) -> frozenset[int]:
        """Coordinates the polynomial actually depends on."""
        coords = set()
        for e in self.terms:
            coords.update(i for i, x in enumerate(e) if x > 0)
        return frozenset(coords)

    def constant_term(self) -> float:
        return self.terms.get(tuple([0] * self.dims), 0.0)

    def second_partial(self, i: int, j: int) -> "Polynomial":
        """Exact second partial derivative d^2/(dtheta_i dtheta_j)."""
        out: dict[Exponents, float] = {}
        for e, c in self.terms.items():
            e1 = list(e)
            if e1[i] == 0:
                continue
            c1 = c * e1[i]
            e1[i] -= 1
            if e1[j] == 0:
                continue
            c1 *= e1[j]
            e1[j] -= 1
            key = tuple(e1)
            out[key] = out.get(key, 0.0) + c1
        return Polynomial(self.dims, out)

    def evaluate_points(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., dims)."""
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for e, c in self.terms.items():
            term = np.full(pts.shape[:-1], c)
            for i, p in enumerate(e):
                if p:
                    term = term * pts[..., i] ** p
            out += term
        return out

    def restrict_exponents(self, coords: Sequence[int], exponents: Exponents) -> Exponents:
        return tuple(exponents[i] for i in coords)

    def is_block_additive(self, blocks) -> bool:
        """True iff every monomial touches at most one block."""
        for e in self.terms:
            touched = {blocks.block_of(i) for i, x in enumerate(e) if x > 0}
            if len(touched) > 1:
                return False
        return True

    def to_json_dict(self) -> dict:
        return {"poly": [[c, list(e)] for e, c in sorted(self.terms.items())]}


def _accumulate(dims, terms):
    out: dict[Exponents, float] = {}
    for c, e in terms:
        key = tuple(int(x) for x in e)
        out[key] = out.get(key, 0.0) + float(c)
    return out


@dataclass(frozen=True)
class BoxTail:
    """Indicator of joint lower-threshold exceedance.

    ``lower[i] is None`` deactivates coordinate i; at least one threshold
    must be active.
    """

    lower: tuple[Optional[float], ...]

    def __post_init__(self):
        lower = tuple(None if t is None else float(t) for t in self.lower)
        object.__setattr__(self, "lower", lower)
        if not any(t is not None for t in lower):
            raise DimensionMismatch("BoxTail needs at least one active threshold")

    @property
    def dims(self) -> int:
        return len(self.lower)

    def active_coords(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.lower) if t is not None)

    def support_coords(self) -> frozenset[int]:
        return frozenset(self.active_coords())

    def evaluate_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.ones(pts.shape[:-1], dtype=bool)
        for i, t in enumerate(self.lower):
            if t is not None:
                out &= pts[..., i] > t
        return out.astype(float)

    def to_json_dict(self) -> dict:
        return {"boxtail": {"lower": [t for t in self.lower]}}


@dataclass(frozen=True)
class GridTable:
    """Values tabulated on grid axes for a subset of coordinates.

    ``coords`` lists, in ascending order, the ambient coordinates the table
    depends on; ``axes`` holds one strictly increasing axis per entry of
    ``coords`` and ``values`` has the matching shape.
    """

    dims: int
    coords: tuple[int, ...]
    axes: tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "coords", tuple(int(i) for i in self.coords))
        if len(axes) != len(self.coords):
            raise DimensionMismatch("one axis required per tabulated coordinate")
        if values.shape != tuple(len(a) for a in axes):
            raise DimensionMismatch(
                f"table shape {values.shape} does not match axes"
            )
        if list(self.coords) != sorted(set(self.coords)):
            raise DimensionMismatch("coords must be strictly ascending")

    def support_coords(self) -> frozenset[int]:
        return frozenset(self.coords)

    def broadcast(self, full_axes: Sequence[np.ndarray]) -> np.ndarray:
        """Expand the table to the full tensor shape of ``full_axes``."""
        for k, c in enumerate(self.coords):
            if self.axes[k].shape != np.asarray(full_axes[c]).shape or not np.array_equal(
                self.axes[k], full_axes[c]
            ):
                raise AxesMismatch(f"table axis for coordinate {c} differs from grid axis")
        shape = [1] * len(full_axes)
        for k, c in enumerate(self.coords):
            shape[c] = len(self.axes[k])
        arr = self.values.reshape(shape)
        full_shape = tuple(len(a) for a in full_axes)
        return np.broadcast_to(arr, full_shape)

    def to_json_dict(self) -> dict:
        return {
            "grid": {
                "dims": self.dims,
                "coords": list(self.coords),
                "axes": [a.tolist() for a in self.axes],
                "values": self.values.ravel().tolist(),
                "shape": list(self.values.shape),
            }
        }


FunctionalSpec = Union[Polynomial, BoxTail, GridTable]


def functional_dims(f: FunctionalSpec) -> int:
    return f.dims


def evaluate_on_axes(f: FunctionalSpec, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate a functional on the tensor grid spanned by ``axes``."""
    d = len(axes)
    if isinstance(f, GridTable):
        return np.array(f.broadcast(axes))
    if f.dims != d:
        raise DimensionMismatch(f"functional dims {f.dims} != grid dims {d}")
    if isinstance(f, Polynomial):
        shape = tuple(len(a) for a in axes)
        out = np.zeros(shape)
        for e, c in f.terms.items():
            term = np.array(c)
            for i, p in enumerate(e):
                if p:
                    ax = np.asarray(axes[i], dtype=float) ** p
                    sh = [1] * d
                    sh[i] = len(axes[i])
                    term = term * ax.reshape(sh)
            out = out + term
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out
    if isinstance(f, BoxTail):
        shape = tuple(len(a) for a in axes)
        out = np.ones(shape, dtype=bool)
        for i, t in enumerate(f.lower):
            if t is not None:
                sh = [1] * d
                sh[i] = len(axes[i])
                out &= (np.asarray(axes[i]) > t).reshape(sh)
        return out.astype(float)
    raise VibiasError(f"unknown functional type {type(f)!r}")


def parse_functional(obj: dict, dims: Optional[int] = None) -> FunctionalSpec:
    """Parse the shared JSON wire format for functionals."""
    if "poly" in obj:
        terms = obj["poly"]
        if dims is None:
            if not terms:
                raise DimensionMismatch("empty polynomial needs explicit dims")
            dims = len(terms[0][1])
        return Polynomial.from_terms(dims, [(c, e) for c, e in terms])
    if "boxtail" in obj:
        return BoxTail(tuple(obj["boxtail"]["lower"]))
    if "grid" in obj:
        g = obj["grid"]
        shape = tuple(g["shape"])
        return GridTable(
            dims=int(g["dims"]),
            coords=tuple(g["coords"]),
            axes=tuple(np.asarray(a, dtype=float) for a in g["axes"]),
            values=np.asarray(g["values"], dtype=float).reshape(shape),
        )
    raise DimensionMismatch(f"unrecognized functional spec keys: {sorted(obj)}")


def serialize_functional(f: FunctionalSpec) -> dict:
    return f.to_json_dict()
