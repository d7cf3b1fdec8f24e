"""Standard and two-time conditional 4-currents.

The bilinear psi_f^* j-hat^alpha psi_i is evaluated from analytic jets. Index
conventions: contravariant components (j^0, j^1), metric diag(+1, -1), so
d^0 = d_t and d^1 = -d_x. With these conventions a positive-energy plane wave
exp(-i(E t - p x)) carries j^alpha = p^alpha / m in all three models.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .spacetime import DEFAULT_NULL_TOL, classify, minkowski_dot
from .states import (
    GAMMA, KLEIN_GORDON, OVERLAP_FLOOR, SCHRODINGER, GaussianPacket, Jet, PlaneWave,
    QuadSpec, WaveModel, Wavefunction, auto_quad, overlap,
)

DEFAULT_EPSILON = 0.02
COMPLETENESS_REPORT = 1e-6


class OverlapFloorError(ValueError):
    """Raised when <f|i> is too small to condition on."""


class CompletenessWarning(UserWarning):
    pass


def _coords(t, x):
    if x is None:
        t, x = t[0], t[1]
    return np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))


def bilinear_from_jets(model: WaveModel, jf: Jet, ji: Jet, gamma: np.ndarray = GAMMA) -> np.ndarray:
    """Complex psi_f^* j-hat^alpha psi_i, shape (2, *grid)."""
    m = model.mass
    if model.kind == SCHRODINGER:
        f, i = np.conj(jf.val[0]), ji.val[0]
        j0 = f * i
        j1 = (-1j / (2 * m)) * (f * ji.dx[0] - np.conj(jf.dx[0]) * i)
        return np.stack([j0, j1])
    if model.kind == KLEIN_GORDON:
        f, i = np.conj(jf.val[0]), ji.val[0]
        j0 = (1j / (2 * m)) * (f * ji.dt[0] - np.conj(jf.dt[0]) * i)
        j1 = (-1j / (2 * m)) * (f * ji.dx[0] - np.conj(jf.dx[0]) * i)
        return np.stack([j0, j1])
    # Dirac: psibar_f gamma^alpha psi_i with psibar = psi^dagger gamma^0
    fbar = np.einsum("a...,ab->b...", np.conj(jf.val), gamma[0])
    return np.stack([np.einsum("a...,ab,b...->...", fbar, g, ji.val) for g in gamma])


def jhat_bilinear(model: WaveModel, psi_f: Wavefunction, psi_i: Wavefunction, t, x=None) -> np.ndarray:
    """psi_f^* j-hat^alpha psi_i at events (t, x) before taking the real part."""
    t, x = _coords(t, x)
    return bilinear_from_jets(model, psi_f.jet(t, x), psi_i.jet(t, x))


@dataclass(frozen=True)
class BoundaryPair:
    """Initial and final wavefunctions with their cached overlap <f|i>.

    `allow_mismatch` permits wavefunctions of the same kind but different mass;
    it exists only for negative controls.
    """

    psi_i: Wavefunction
    psi_f: Wavefunction
    overlap_fi: complex | None = None
    t_slice: float = 0.0
    quad: QuadSpec | None = None
    floor: float = OVERLAP_FLOOR
    allow_mismatch: bool = False

    def __post_init__(self):
        mi, mf = self.psi_i.model, self.psi_f.model
        if mi.kind != mf.kind or (mi != mf and not self.allow_mismatch):
            raise ValueError(f"boundary wavefunctions belong to different models: {mi} vs {mf}")
        if self.overlap_fi is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                ov = _mixed_overlap(self.psi_f, self.psi_i, self.t_slice, self.quad)
            object.__setattr__(self, "overlap_fi", ov)
        object.__setattr__(self, "overlap_fi", complex(self.overlap_fi))
        if abs(self.overlap_fi) < self.floor:
            raise OverlapFloorError(
                f"|<f|i>| = {abs(self.overlap_fi):.3e} is below the floor {self.floor:.1e}; "
                "this final outcome is incompatible with the initial state")

    @property
    def model(self) -> WaveModel:
        return self.psi_i.model


def _mixed_overlap(psi_f, psi_i, t_slice, quad):
    if psi_f.model == psi_i.model:
        return overlap(psi_f, psi_i, t_slice, quad)
    # mass-mismatched negative controls: use psi_i's operator
    if quad is None:
        quad = auto_quad([psi_f, psi_i], t_slice)
    x, w = quad.nodes()
    b = jhat_bilinear(psi_i.model, psi_f, psi_i, np.full_like(x, t_slice), x)
    return complex(np.sum(w * b[0]))


class CurrentField:
    """A real 4-current field j^alpha(t, x) on 1+1 spacetime."""

    def j(self, t, x=None) -> np.ndarray:
        raise NotImplementedError

    def rho0(self, t, x=None) -> np.ndarray:
        return rest_density(self.j(t, x))

    def classify(self, t, x=None, tol: float = DEFAULT_NULL_TOL) -> np.ndarray:
        return classify(self.j(t, x), tol)

    def __call__(self, t, x=None):
        return self.j(t, x)


class ConditionalField(CurrentField):
    def __init__(self, pair: BoundaryPair):
        self.pair = pair
        self.model = pair.model

    def bilinear(self, t, x=None) -> np.ndarray:
        return jhat_bilinear(self.model, self.pair.psi_f, self.pair.psi_i, t, x)

    def j(self, t, x=None):
        return np.real(self.bilinear(t, x) / self.pair.overlap_fi)


class StandardField(CurrentField):
    def __init__(self, psi: Wavefunction):
        self.psi = psi
        self.model = psi.model

    def j(self, t, x=None):
        return np.real(jhat_bilinear(self.model, self.psi, self.psi, t, x))


class UniformField(CurrentField):
    def __init__(self, j0: float, j1: float):
        self.vec = np.array([j0, j1], dtype=float)

    def j(self, t, x=None):
        t, x = _coords(t, x)
        return self.vec.reshape((2,) + (1,) * t.ndim) * np.ones_like(t)


class FunctionField(CurrentField):
    """Wraps a callable (t, x) -> (2, ...) array."""

    def __init__(self, func):
        self.func = func

    def j(self, t, x=None):
        t, x = _coords(t, x)
        return np.asarray(self.func(t, x), dtype=float)


def conditional_current(pair: BoundaryPair, t, x=None) -> np.ndarray:
    return ConditionalField(pair).j(t, x)


def standard_current(psi: Wavefunction, t, x=None) -> np.ndarray:
    return StandardField(psi).j(t, x)


def rest_density(j) -> np.ndarray:
    """|j.j|^(1/2) for arrays with leading axis of length 2."""
    j = np.asarray(j, dtype=float)
    return np.sqrt(np.abs(minkowski_dot(j, j)))


def continuity_residual(field: CurrentField, t, x=None, h: float = 1e-3) -> np.ndarray:
    """d_t j^0 + d_x j^1 by central differences."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    t, x = _coords(t, x)
    d0 = (field.j(t + h, x)[0] - field.j(t - h, x)[0]) / (2 * h)
    d1 = (field.j(t, x + h)[1] - field.j(t, x - h)[1]) / (2 * h)
    return d0 + d1


# ---------------------------------------------------------------------------
# Final-state families and the average over outcomes

@dataclass
class FinalFamily:
    """Final wavefunctions with quadrature weights so that sum_f w_f |f><f| approximates 1."""

    members: list
    weights: np.ndarray
    t_f: float
    label: str = ""
    quad: QuadSpec | None = None   # explicit slice grid for unbounded members

    def __len__(self):
        return len(self.members)


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    d = np.diff(grid)
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("final-family grid must be uniform")
    w = np.full(grid.size, d[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def epsilon_gaussian(model: WaveModel, x_f: float, t_f: float, eps: float = DEFAULT_EPSILON) -> GaussianPacket:
    """Narrow Gaussian standing in for a position eigenstate: |psi|^2 at t_f has std eps."""
    return GaussianPacket(model, x_f, eps, 0.0, t_f)


def position_family(model: WaveModel, x_grid, t_f: float, eps: float = DEFAULT_EPSILON) -> FinalFamily:
    """epsilon-Gaussians at positions x_grid, weighted so the family resolves the identity.

    With unit-normalised members, sum_f |f><f| dx_f is convolution with the
    kernel exp(-(x - x')^2 / (8 eps^2)), whose integral is eps sqrt(8 pi);
    dividing the trapezoid weights by that constant makes the kernel a
    normalised smoothing of width 2 eps.
    """
    if model.kind != SCHRODINGER:
        raise ValueError("position families are only defined for the Schrodinger model")
    x_grid = np.asarray(x_grid, dtype=float)
    w = _trapezoid_weights(x_grid) / (eps * np.sqrt(8 * np.pi))
    members = [epsilon_gaussian(model, xf, t_f, eps) for xf in x_grid]
    return FinalFamily(members, w, t_f, f"position(eps={eps})")


def momentum_family(model: WaveModel, p_grid, t_f: float) -> FinalFamily:
    """Delta-normalised plane waves: sum_p |p><p| dp resolves the identity on positive-energy states."""
    p_grid = np.asarray(p_grid, dtype=float)
    w = _trapezoid_weights(p_grid)
    members = []
    for p in p_grid:
        if model.kind == SCHRODINGER:
            nrm = 1 / np.sqrt(2 * np.pi)
        else:
            nrm = np.sqrt(model.mass / (2 * np.pi * float(model.energy(p))))
        members.append(nrm * PlaneWave(model, p))
    return FinalFamily(members, w, t_f, "momentum")


class AveragedCurrent(NamedTuple):
    j: np.ndarray
    completeness_defect: float


def family_overlaps(psi_i: Wavefunction, family: FinalFamily) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return np.array([overlap(f, psi_i, family.t_f, family.quad) for f in family.members])


def average_over_finals(psi_i: Wavefunction, family: FinalFamily, t, x=None,
                        overlaps: np.ndarray | None = None) -> AveragedCurrent:
    """sum_f w_f rho(f) Re[psi_f^* j-hat psi_i / <f|i>] with rho(f) = |<f|i>|^2.

    The product rho(f) / <f|i> equals conj(<f|i>), which keeps outcomes with tiny
    overlap well conditioned.
    """
    t, x = _coords(t, x)
    if overlaps is None:
        overlaps = family_overlaps(psi_i, family)
    ji = psi_i.jet(t, x)
    acc = np.zeros((2,) + t.shape)
    for f, ov, w in zip(family.members, overlaps, family.weights):
        b = bilinear_from_jets(psi_i.model, f.jet(t, x), ji)
        acc += w * np.real(b * np.conj(ov))
    defect = float(np.sum(family.weights * np.abs(overlaps) ** 2) - 1.0)
    if abs(defect) > COMPLETENESS_REPORT:
        warnings.warn(f"final family completeness defect {defect:+.3e}", CompletenessWarning, stacklevel=2)
    return AveragedCurrent(acc, defect)


# ---------------------------------------------------------------------------
# Approach to a position measurement

class SliceStats(NamedTuple):
    t: float
    mean: float
    variance: float
    min_j0: float
    integral: float


def j0_slice(pair: BoundaryPair, t: float, quad: QuadSpec | None = None):
    """(x, j0) on a slice grid covering the common support of both boundary states."""
    if quad is None:
        quad = auto_quad([pair.psi_f, pair.psi_i], t)
    x, w = quad.nodes()
    return x, w, conditional_current(pair, np.full_like(x, t), x)[0]


def measurement_limit_profile(pair: BoundaryPair, times: Sequence[float],
                              quad: QuadSpec | None = None) -> list[SliceStats]:
    """Mean and variance of the normalised j0 slice at each time."""
    out = []
    for t in times:
        x, w, j0 = j0_slice(pair, t, quad)
        total = float(np.sum(w * j0))
        dens = j0 / total
        mean = float(np.sum(w * x * dens))
        var = float(np.sum(w * (x - mean) ** 2 * dens))
        out.append(SliceStats(float(t), mean, var, float(j0.min()), total))
    return out


# ---------------------------------------------------------------------------
# Closed forms for pairs of Schrodinger Gaussians

def _gauss_quadratic(g: GaussianPacket, t: float):
    """(C, w, A) with psi(t, x) = exp(C - (x - w)^2 / A)."""
    m, sig = g.model.mass, g.sigma
    s = 1 + 1j * (t - g.t0) / (2 * m * sig ** 2)
    a = 4 * sig ** 2 * s
    w = g.x0 + 2j * sig ** 2 * g.p0
    c = -0.25 * np.log(2 * np.pi * sig ** 2) - 0.5 * np.log(s) - (sig * g.p0) ** 2
    return c, w, a


def _product_quadratic(f: GaussianPacket, i: GaussianPacket, t: float):
    """f^* i = exp(-a x^2 + b x + c)."""
    cf, wf, af = _gauss_quadratic(f, t)
    ci, wi, ai = _gauss_quadratic(i, t)
    cf, wf, af = np.conj(cf), np.conj(wf), np.conj(af)
    a = 1 / af + 1 / ai
    b = 2 * wf / af + 2 * wi / ai
    c = cf + ci - wf ** 2 / af - wi ** 2 / ai
    return a, b, c


def gaussian_overlap(f: GaussianPacket, i: GaussianPacket, t: float = 0.0) -> complex:
    """<f|i> for two Schrodinger Gaussians by completing the square (no quadrature)."""
    a, b, c = _product_quadratic(f, i, t)
    return complex(np.sqrt(np.pi / a) * np.exp(b * b / (4 * a) + c))


def measurement_slice_oracle(psi_i: GaussianPacket, final: GaussianPacket, x) -> np.ndarray:
    """Closed-form j0 slice Re[f^* psi_i / <f|i>] at the final Gaussian's reference time."""
    t = final.t0
    a, b, c = _product_quadratic(final, psi_i, t)
    x = np.asarray(x, dtype=float)
    return np.real(np.exp(-a * x * x + b * x + c) / gaussian_overlap(final, psi_i, t))
