"""Real cochains on a surface and the discrete (co)differential operators.

Sign conventions used throughout the package:

* ``d0(f)(u -> v) = f(v) - f(u)`` (head minus tail);
* ``d1(w)(face)`` sums ``w`` over the face's counterclockwise boundary;
* ``delta1(w)(v)`` sums ``w`` over every directed edge leaving ``v``;
* ``delta2(g)(u -> v) = g(left) - g(right)`` for the canonical edge
  ``u < v``, where the left face is the one whose boundary contains
  ``u -> v``.  A missing face counts as zero.

With these choices ``delta1 = -D0^T`` and ``delta2 = D1^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complex import CombinatorialSurface


class _Cochain:
    degree = -1

    def __init__(self, surface: CombinatorialSurface, values):
        values = np.array(values, dtype=float, copy=True)
        n = self._size(surface)
        if values.shape != (n,):
            raise ValueError(
                f"{type(self).__name__} on this surface needs {n} values, got {values.shape}")
        values.setflags(write=False)
        self.surface = surface
        self.values = values

    @staticmethod
    def _size(surface):
        raise NotImplementedError

    @classmethod
    def zeros(cls, surface):
        return cls(surface, np.zeros(cls._size(surface)))

    def _check(self, other):
        if type(other) is not type(self) or other.surface is not self.surface:
            raise TypeError("cochains must have the same degree and surface")

    def __add__(self, other):
        self._check(other)
        return type(self)(self.surface, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return type(self)(self.surface, self.values - other.values)

    def __neg__(self):
        return type(self)(self.surface, -self.values)

    def __mul__(self, c):
        return type(self)(self.surface, self.values * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return type(self)(self.surface, self.values / float(c))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    def __repr__(self):
        return f"{type(self).__name__}(n={len(self.values)}, max_abs={self.max_abs():.3g})"


class Cochain0(_Cochain):
    """Per-node values."""

    degree = 0

    @staticmethod
    def _size(surface):
        return surface.n_nodes


class Cochain1(_Cochain):
    """Per-edge values stored under the canonical ``u < v`` orientation."""

    degree = 1

    @staticmethod
    def _size(surface):
        return surface.n_edges

    def value(self, u: int, v: int) -> float:
        e, sign = self.surface.edge_index(u, v)
        return sign * float(self.values[e])

    def inner(self, other: Cochain1) -> float:
        self._check(other)
        return float(np.dot(self.values, other.values))


class Cochain2(_Cochain):
    """Per-face values."""

    degree = 2

    @staticmethod
    def _size(surface):
        return surface.n_faces


def d0(f: Cochain0) -> Cochain1:
    return Cochain1(f.surface, f.surface.D0 @ f.values)


def d1(w: Cochain1) -> Cochain2:
    return Cochain2(w.surface, w.surface.D1 @ w.values)


def delta1(w: Cochain1) -> Cochain0:
    return Cochain0(w.surface, -(w.surface.D0.T @ w.values))


def delta2(g: Cochain2) -> Cochain1:
    return Cochain1(g.surface, g.surface.D1.T @ g.values)


@dataclass(frozen=True)
class ResidualNorms:
    err_dh: float
    err_delta_h: float
    err_dh_rms: float
    err_delta_h_rms: float

    def __iter__(self):
        # unpacks as the (max-abs) headline pair
        yield self.err_dh
        yield self.err_delta_h


def residual_norms(h: Cochain1, s: CombinatorialSurface | None = None) -> ResidualNorms:
    """Curl and divergence of ``h``: max-abs over faces/nodes plus RMS."""
    if s is not None and s is not h.surface:
        raise ValueError("cochain lives on a different surface")
    curl = d1(h).values
    div = delta1(h).values
    return ResidualNorms(
        err_dh=float(np.max(np.abs(curl))) if len(curl) else 0.0,
        err_delta_h=float(np.max(np.abs(div))),
        err_dh_rms=float(np.sqrt(np.mean(curl ** 2))) if len(curl) else 0.0,
        err_delta_h_rms=float(np.sqrt(np.mean(div ** 2))),
    )
