"""Entangled multi-time states, projection onto single-particle wavefunctions, and
the recovery of position correlations from separate conditional densities.

States are finite sums of products of single-particle solutions, so each term
propagates independently and the amplitude is a genuine multi-time object
<x1,t1; x2,t2; ...|i>.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .currents import (
    DEFAULT_EPSILON, BoundaryPair, OverlapFloorError, conditional_current, epsilon_gaussian,
)
from .states import (
    OVERLAP_FLOOR, SCHRODINGER, QuadSpec, Superposition, WaveModel, Wavefunction, free_gaussian, overlap,
)

FACTORIZATION_TOL = 1e-8
MAX_PARTICLES = 4


class MultiParticleState:
    """sum_k c_k prod_j phi_{k,j}(x_j, t_j)."""

    def __init__(self, terms: Sequence[tuple[complex, Sequence[Wavefunction]]]):
        terms = [(complex(c), tuple(f)) for c, f in terms]
        if not terms:
            raise ValueError("state needs at least one term")
        n = len(terms[0][1])
        if not 2 <= n <= MAX_PARTICLES:
            raise ValueError(f"particle count must be between 2 and {MAX_PARTICLES}, got {n}")
        if any(len(f) != n for _, f in terms):
            raise ValueError("every term must have one factor per particle")
        models = {w.model for _, f in terms for w in f}
        if len(models) != 1:
            raise ValueError("all factors must share one wave model")
        self.terms = terms
        self.n = n
        self.model: WaveModel = models.pop()

    def __repr__(self):
        return f"MultiParticleState(n={self.n}, rank={len(self.terms)}, {self.model.kind})"

    @property
    def rank(self) -> int:
        return len(self.terms)

    def norm_squared(self) -> float:
        """<Psi|Psi> from single-particle overlaps of the factors."""
        total = 0j
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for ca, fa in self.terms:
                for cb, fb in self.terms:
                    prod = np.conj(ca) * cb
                    for wa, wb in zip(fa, fb):
                        prod *= overlap(wa, wb, 0.0)
                    total += prod
        return float(total.real)

    def normalized(self) -> "MultiParticleState":
        nrm = np.sqrt(self.norm_squared())
        return MultiParticleState([(c / nrm, f) for c, f in self.terms])

    def amplitude(self, times: Sequence, positions: Sequence) -> np.ndarray:
        """Amplitude at events (times[j], positions[j]) for each particle j (broadcasting)."""
        if len(times) != self.n or len(positions) != self.n:
            raise ValueError(f"need {self.n} times and positions")
        total = 0
        for c, factors in self.terms:
            prod = c
            for w, t, x in zip(factors, times, positions):
                prod = prod * w(t, x)[0]
            total = total + prod
        return total


class ProjectedState(Superposition):
    """Unit-normalised single-particle wavefunction with its normalisation constant N."""

    def __init__(self, terms, norm_constant: float, coefficients: np.ndarray):
        super().__init__(terms)
        self.norm_constant = norm_constant
        self.coefficients = coefficients

    def __repr__(self):
        return f"ProjectedState({len(self.terms)} terms, N={self.norm_constant:.6g})"


def _gram(wavefunctions: Sequence[Wavefunction], t: float = 0.0, quad: QuadSpec | None = None) -> np.ndarray:
    n = len(wavefunctions)
    g = np.empty((n, n), dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for a in range(n):
            for b in range(a, n):
                g[a, b] = overlap(wavefunctions[a], wavefunctions[b], t, quad)
                g[b, a] = np.conj(g[a, b])
    return g


def projection_coefficients(state: MultiParticleState, finals: Mapping[int, Wavefunction], keep: int,
                            t_slices: Mapping[int, float] | float = 0.0,
                            quads: Mapping[int, QuadSpec] | None = None) -> np.ndarray:
    """a_k = c_k prod_{j != keep} <final_j | phi_{k,j}> evaluated on slice t_slices[j]."""
    others = [j for j in range(state.n) if j != keep]
    if not 0 <= keep < state.n:
        raise IndexError(f"particle index {keep} out of range")
    if sorted(finals) != others:
        raise ValueError(f"finals must cover particles {others}, got {sorted(finals)}")
    if not isinstance(t_slices, Mapping):
        t_slices = {j: float(t_slices) for j in others}
    quads = quads or {}
    coef = np.empty(state.rank, dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k, (c, factors) in enumerate(state.terms):
            a = c
            for j in others:
                a *= overlap(finals[j], factors[j], t_slices[j], quads.get(j))
            coef[k] = a
    return coef


def project_single_particle(state: MultiParticleState, finals: Mapping[int, Wavefunction], keep: int,
                            t_slices: Mapping[int, float] | float = 0.0,
                            quads: Mapping[int, QuadSpec] | None = None,
                            floor: float = OVERLAP_FLOOR) -> ProjectedState:
    """Updated single-particle wavefunction of particle `keep` given the other particles' finals.

    Returns (1/N) sum_k a_k phi_{k,keep}, unit-normalised; N is stored on the result.
    """
    coef = projection_coefficients(state, finals, keep, t_slices, quads)
    factors = [f[keep] for _, f in state.terms]
    g = _gram(factors)
    norm2 = float(np.real(np.conj(coef) @ g @ coef))
    if not norm2 > floor ** 2:
        raise OverlapFloorError(
            f"projected wavefunction has norm {np.sqrt(max(norm2, 0.0)):.3e} below the floor {floor:.1e}; "
            "the given outcomes are incompatible with the state")
    nconst = np.sqrt(norm2)
    return ProjectedState([(a / nconst, f) for a, f in zip(coef, factors)], nconst, coef / nconst)


def projection_distance(p1: ProjectedState, p2: ProjectedState) -> float:
    """Norm of the difference of two projections built on the same factor list."""
    f1 = [w for _, w in p1.terms]
    f2 = [w for _, w in p2.terms]
    if len(f1) != len(f2) or any(a is not b for a, b in zip(f1, f2)):
        raise ValueError("projections must share their factor wavefunctions")
    d = p1.coefficients - p2.coefficients
    return float(np.sqrt(max(np.real(np.conj(d) @ _gram(f1) @ d), 0.0)))


def slice_independence_of_projection(state: MultiParticleState, finals: Mapping[int, Wavefunction],
                                     keep: int, t1: float, t2: float) -> float:
    p1 = project_single_particle(state, finals, keep, t1)
    p2 = project_single_particle(state, finals, keep, t2)
    return projection_distance(p1, p2)


# ---------------------------------------------------------------------------
# Separate conditional densities

def _require_schrodinger(model: WaveModel):
    if model.kind != SCHRODINGER:
        raise ValueError("position-measurement densities are defined for the Schrodinger model only")


def conditional_density(pair: BoundaryPair, t, x=None) -> np.ndarray:
    """rho(x | final) = Re[psi_f^* psi_i / <f|i>], the time component of the conditional current."""
    _require_schrodinger(pair.model)
    return conditional_current(pair, t, x)[0]


def joint_conditional_density(pair1: BoundaryPair, pair2: BoundaryPair, e1, e2) -> np.ndarray:
    return conditional_density(pair1, e1) * conditional_density(pair2, e2)


@dataclass
class CorrelationReport:
    t: float
    t_prime: float
    x: np.ndarray
    x_prime: np.ndarray
    rho_model: np.ndarray
    rho_qm: np.ndarray
    linf_rel_error: float
    factorization_defect: float
    truncation_estimate: float
    epsilon: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "t": self.t, "t_prime": self.t_prime, "epsilon": self.epsilon,
            "x": self.x.tolist(), "x_prime": self.x_prime.tolist(),
            "rho_model": self.rho_model.tolist(), "rho_qm": self.rho_qm.tolist(),
            "linf_rel_error": self.linf_rel_error,
            "factorization_defect": self.factorization_defect,
            "truncation_estimate": self.truncation_estimate,
        }


def factorization_defect(rho: np.ndarray) -> float:
    """Relative distance (spectral norm) of a density table from its best rank-1 approximation."""
    s = np.linalg.svd(np.asarray(rho, dtype=float), compute_uv=False)
    return float(s[1] / s[0]) if s.size > 1 and s[0] > 0 else 0.0


@dataclass
class MeasurementGrid:
    """Uniform grids of epsilon-Gaussian outcomes for both particles."""

    xf: np.ndarray
    xpf: np.ndarray
    t_f: float
    tp_f: float
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        self.xf = np.asarray(self.xf, dtype=float)
        self.xpf = np.asarray(self.xpf, dtype=float)
        for g in (self.xf, self.xpf):
            d = np.diff(g)
            if not np.allclose(d, d[0], rtol=1e-9, atol=0):
                raise ValueError("measurement grids must be uniform")
            if d[0] > self.epsilon * (1 + 1e-9):
                raise ValueError(f"measurement grid spacing {d[0]:.3g} exceeds epsilon {self.epsilon:.3g}")

    @staticmethod
    def trapezoid(g):
        w = np.full(g.size, g[1] - g[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def _eps_final_conj(t, x, x_f, t_f, eps, m):
    """Conjugated epsilon-Gaussian finals, broadcasting over x and x_f."""
    return np.conj(free_gaussian(t, x, x_f, eps, 0.0, t_f, m))


class _OutcomeTables:
    """Overlaps of every epsilon-Gaussian outcome with every term's factors."""

    def __init__(self, state: MultiParticleState, grid: MeasurementGrid):
        self.state, self.grid = state, grid
        self.coef = np.array([c for c, _ in state.terms])
        self.A = np.empty((state.rank, grid.xf.size), dtype=complex)
        self.B = np.empty((state.rank, grid.xpf.size), dtype=complex)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for k, (_, (f1, f2)) in enumerate(state.terms):
                for a, xf in enumerate(grid.xf):
                    self.A[k, a] = overlap(epsilon_gaussian(state.model, xf, grid.t_f, grid.epsilon), f1, grid.t_f)
                for b, xpf in enumerate(grid.xpf):
                    self.B[k, b] = overlap(epsilon_gaussian(state.model, xpf, grid.tp_f, grid.epsilon), f2, grid.tp_f)
        # joint overlap <f_xf f'_xpf | Psi>, shape (n_xf, n_xpf)
        self.D = np.einsum("k,ka,kb->ab", self.coef, self.A, self.B)


def marginal_density(state: MultiParticleState, grid: MeasurementGrid, t: float, x, t_prime: float, x_prime,
                     tables: _OutcomeTables | None = None) -> tuple[np.ndarray, float]:
    """rho(x, x') = int int rho1(x | x_f) rho2(x' | x'_f) rho(x_f, x'_f) dx_f dx'_f on the grid.

    rho1 uses particle 1's wavefunction projected on the epsilon-Gaussian outcome
    x'_f of particle 2 (and vice versa), so both conditional densities share the
    denominator <f_xf f'_xpf | Psi>. The normalisation N of each projection
    cancels. rho(x_f, x'_f) is the point density |Psi(x_f, t_f; x'_f, t'_f)|^2.

    Returns the (len(x), len(x')) table and a truncation estimate: one minus the
    grid's total captured probability.
    """
    _require_schrodinger(state.model)
    if state.n != 2:
        raise ValueError("the correlation pipeline handles two particles")
    tab = tables or _OutcomeTables(state, grid)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(x_prime, dtype=float))
    m, eps = state.model.mass, grid.epsilon
    f1 = [fs[0] for _, fs in state.terms]
    f2 = [fs[1] for _, fs in state.terms]
    phi1 = np.array([w(t, x)[0] for w in f1])            # (K, nx)
    phi2 = np.array([w(t_prime, xp)[0] for w in f2])     # (K, nx')
    F1 = _eps_final_conj(t, x[:, None], grid.xf[None, :], grid.t_f, eps, m)      # (nx, na)
    F2 = _eps_final_conj(t_prime, xp[:, None], grid.xpf[None, :], grid.tp_f, eps, m)  # (nx', nb)
    D = tab.D
    # numerators: particle 1 -> sum_k c_k B_k(b) phi1_k(x); particle 2 -> sum_k c_k A_k(a) phi2_k(x')
    num1 = np.einsum("k,kb,kx->xb", tab.coef, tab.B, phi1)       # (nx, nb)
    num2 = np.einsum("k,ka,ky->ya", tab.coef, tab.A, phi2)       # (nx', na)
    rho1 = np.real(F1[:, :, None] * num1[:, None, :] / D[None])  # (nx, na, nb)
    rho2 = np.real(F2[:, None, :] * num2[:, :, None] / D[None])  # (nx', na, nb)
    pts = state.amplitude([grid.t_f, grid.tp_f], [grid.xf[:, None], grid.xpf[None, :]])
    weight = (MeasurementGrid.trapezoid(grid.xf)[:, None] * MeasurementGrid.trapezoid(grid.xpf)[None, :]
              * np.abs(pts) ** 2)
    rho = np.einsum("xab,yab,ab->xy", rho1, rho2, weight)
    truncation = float(1.0 - weight.sum())
    return rho, truncation


def measurement_limit_correlation(state: MultiParticleState, grid: MeasurementGrid, times: Sequence[tuple[float, float]],
                                  x, x_prime) -> list[CorrelationReport]:
    """Compare the model marginal with |amplitude|^2 along a sequence of (t, t')."""
    tab = _OutcomeTables(state, grid)
    x = np.asarray(x, dtype=float)
    xp = np.asarray(x_prime, dtype=float)
    out = []
    for t, tp in times:
        rho, trunc = marginal_density(state, grid, t, x, tp, xp, tab)
        qm = np.abs(state.amplitude([t, tp], [x[:, None], xp[None, :]])) ** 2
        err = float(np.max(np.abs(rho - qm)) / np.max(np.abs(qm)))
        out.append(CorrelationReport(float(t), float(tp), x, xp, rho, qm, err,
                                     factorization_defect(rho), trunc, grid.epsilon))
    return out


def outcome_probability_sum(state: MultiParticleState, keep: int, finals: Sequence[Wavefunction],
                            weights: Sequence[float], t_slice: float = 0.0) -> float:
    """sum_f w_f ||unnormalised projection||^2 over a final family for the other particle."""
    other = 1 - keep if state.n == 2 else None
    if other is None:
        raise ValueError("probability bookkeeping is implemented for two particles")
    factors = [f[keep] for _, f in state.terms]
    g = _gram(factors)
    total = 0.0
    for f, w in zip(finals, weights):
        a = projection_coefficients(state, {other: f}, keep, t_slice)
        total += w * float(np.real(np.conj(a) @ g @ a))
    return total
