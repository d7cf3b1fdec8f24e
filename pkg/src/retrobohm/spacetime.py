"""Minkowski geometry in 1+1 dimensions, signature (+, -), hbar = c = 1.

Vectors are stored contravariantly. Functions accept either the named tuples
below or numpy arrays whose leading axis has length 2, so the same code serves
single events and whole probe grids.
"""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

DEFAULT_NULL_TOL = 1e-10


class Event(NamedTuple):
    t: float
    x: float


class FourVector(NamedTuple):
    v0: float
    v1: float


class CausalClass(enum.IntEnum):
    SPACELIKE = -1
    NULL = 0
    TIMELIKE = 1


def lower(v):
    """Covariant components: (v0, v1) -> (v0, -v1)."""
    return np.stack([np.asarray(v[0]), -np.asarray(v[1])])


def minkowski_dot(a, b):
    return a[0] * b[0] - a[1] * b[1]


def causal_class(v, tol: float = DEFAULT_NULL_TOL) -> CausalClass:
    if tol < 0:
        raise ValueError("null tolerance must be non-negative")
    s = float(minkowski_dot(v, v))
    if s > tol:
        return CausalClass.TIMELIKE
    if s < -tol:
        return CausalClass.SPACELIKE
    return CausalClass.NULL


def classify(v, tol: float = DEFAULT_NULL_TOL) -> np.ndarray:
    """Vectorised `causal_class`: int8 codes +1 / 0 / -1 per point."""
    s = np.asarray(minkowski_dot(v, v))
    out = np.zeros(s.shape, dtype=np.int8)
    out[s > tol] = CausalClass.TIMELIKE
    out[s < -tol] = CausalClass.SPACELIKE
    return out


def proper_time_increment(dx):
    """Two-branch proper time |dx.dx|^(1/2); real on timelike and spacelike segments."""
    return np.sqrt(np.abs(minkowski_dot(dx, dx)))


def unit_velocity(dx):
    """dx / |dx.dx|^(1/2). Undefined (inf/nan) on null vectors."""
    d = np.asarray(dx, dtype=float)
    return d / proper_time_increment(d)


def boost(v, rapidity: float):
    """Lorentz boost of a contravariant vector; used to probe invariance."""
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    return np.stack([ch * np.asarray(v[0]) - sh * np.asarray(v[1]),
                     -sh * np.asarray(v[0]) + ch * np.asarray(v[1])])
