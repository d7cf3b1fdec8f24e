"""Registry of verifiable identities and the routines that evaluate them.

Each routine returns a :class:`CheckResult`.  Value checks compare a residual
with a tolerance.  Convergence checks evaluate a finite-difference residual
at two steps ``h`` and ``h/2`` and accept when the ratio of the two sits in
``4 * (1 +- ratio_tol)``, i.e. when the residual is a genuine second-order
truncation error rather than a failure of the identity.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .currents import (BoundaryPair, CompletenessWarning, ConditionalField, CurrentField, FinalFamily,
                       average_over_finals, conditional_current, continuity_residual, family_overlaps,
                       gaussian_overlap, j0_slice, measurement_slice_oracle, standard_current)
from .entanglement import FACTORIZATION_TOL
from .mechanics import em_tensor, em_tensor_divergence, noether_current, source_term_check
from .states import (DIRAC, KLEIN_GORDON, GaussianPacket, QuadSpec, Wavefunction, overlap,
                     wave_equation_residual)
from .trajectories import Trajectory, eom_residual, integrate_flowline, momentum_along

CONVERGENCE_STEPS = (1e-2, 5e-3)
EXPECTED_RATIO = 4.0
RATIO_TOL = 0.2
# Below this absolute level a finite-difference residual is treated as exact;
# the ratio of two rounding-level numbers carries no information.
EXACT_FLOOR = 1e-11


@dataclass(frozen=True)
class CheckSpec:
    name: str
    module: str
    tag: str
    description: str
    default_tol: float
    kind: str = "value"   # "value" or "convergence"

    def to_dict(self) -> dict:
        return asdict(self)


REGISTRY: tuple[CheckSpec, ...] = (
    CheckSpec("averaging_reduction", "currents", "Eq. 11",
              "final-family average of conditional currents equals the standard current (L-inf relative)", 1e-4),
    CheckSpec("correlation_recovery", "entanglement", "Eq. 29",
              "measurement-limit marginal density equals |joint amplitude|^2 (L-inf relative)", 1e-2),
    CheckSpec("guidance_eom", "trajectories", "Eq. 59",
              "particle equation of motion holds along guided flow lines (second-order FD ratio)",
              RATIO_TOL, "convergence"),
    CheckSpec("noether_equality", "mechanics", "Eq. 74",
              "Noether current of the field Lagrangian equals the conditional current", 1e-10),
    CheckSpec("em_tensor_plane_wave", "mechanics", "Eq. 75",
              "plane-wave pair tensor equals p^a p^b / m", 1e-10),
    CheckSpec("tensor_divergence", "mechanics", "Eq. 75",
              "d_b T^{ab} vanishes for exact-solution pairs (second-order FD ratio)", RATIO_TOL, "convergence"),
    CheckSpec("generalized_momentum_zero", "mechanics", "Eq. 83",
              "p^a = rho0 u^a - j^a vanishes along guided flow lines", 1e-8),
    CheckSpec("projection_slice_independence", "entanglement", "Eq. 87",
              "projected single-particle wavefunction does not depend on the slice time", 1e-8),
    CheckSpec("measurement_delta_limit", "currents", "Eq. 93",
              "normalised j0 slice at t_f equals the finite-eps closed form", 1e-8),
    CheckSpec("measurement_mean", "currents", "Eq. 93",
              "mean of the normalised j0 slice just before t_f lies at x_f", 1e-3),
    CheckSpec("factorization_defect", "entanglement", "Eq. 29",
              "product states give a rank-1 marginal table; entangled states exceed 10x this", FACTORIZATION_TOL),
    CheckSpec("source_term_zero", "mechanics", "Eq. 112",
              "dL/dj vanishes along guided flow lines", 1e-12),
    CheckSpec("continuity", "currents", "conservation",
              "d_a j^a vanishes for the conditional current (second-order FD ratio)", RATIO_TOL, "convergence"),
    CheckSpec("wave_equation", "states", "free wave equation",
              "boundary wavefunctions solve their free wave equation (second-order FD ratio)",
              RATIO_TOL, "convergence"),
    CheckSpec("overlap_slice_independence", "states", "conserved overlap",
              "<f|i> is the same on two time slices", 1e-8),
)

CHECKS = {c.name: c for c in REGISTRY}


def list_checks(module: str | None = None) -> list[CheckSpec]:
    """Registered checks, optionally only those belonging to one module."""
    if module is None:
        return list(REGISTRY)
    return [c for c in REGISTRY if c.module == module]


def format_checks(checks: Sequence[CheckSpec]) -> str:
    rows = [("name", "module", "tag", "tolerance", "description")]
    rows += [(c.name, c.module, c.tag, f"{c.default_tol:g}" + (" (ratio)" if c.kind == "convergence" else ""),
              c.description) for c in checks]
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(r[i].ljust(widths[i]) for i in range(4)) + "  " + r[4] for r in rows]
    return "\n".join(lines)


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float
    passed: bool
    ratio: float | None = None
    detail: dict = field(default_factory=dict)

    @property
    def tag(self) -> str:
        spec = CHECKS.get(self.name)
        return spec.tag if spec else ""

    def to_dict(self) -> dict:
        return {"name": self.name, "tag": self.tag, "residual": self.residual, "tolerance": self.tolerance,
                "ratio": self.ratio, "passed": self.passed, "detail": self.detail}


def _tol(name: str, tolerances: dict | None) -> float:
    if tolerances and name in tolerances:
        return float(tolerances[name])
    return CHECKS[name].default_tol


def value_check(name: str, residual: float, tolerances: dict | None = None, **detail) -> CheckResult:
    tol = _tol(name, tolerances)
    residual = float(residual)
    return CheckResult(name, residual, tol, bool(residual <= tol), None, detail)


def convergence_check(name: str, residual_at: Callable[[float], float], steps: Sequence[float] = CONVERGENCE_STEPS,
                      tolerances: dict | None = None, **detail) -> CheckResult:
    """Second-order convergence test: residual(h) / residual(h/2) close to 4.

    ``residual_at`` returns a non-negative scalar.  The reported residual is
    the one at the finer step.
    """
    tol = _tol(name, tolerances)
    h1, h2 = steps
    r1, r2 = float(residual_at(h1)), float(residual_at(h2))
    expected = (h1 / h2) ** 2
    detail = {"steps": [h1, h2], "residuals": [r1, r2], **detail}
    if r1 < EXACT_FLOOR and r2 < EXACT_FLOOR:
        return CheckResult(name, r2, tol, True, None, {**detail, "note": "exact to rounding"})
    ratio = r1 / r2 if r2 > 0 else float("inf")
    passed = abs(ratio / expected - 1.0) <= tol
    return CheckResult(name, r2, tol, bool(passed), ratio, detail)


# ---------------------------------------------------------------------------
# Individual identities

def check_continuity(field: CurrentField, t, x, steps=CONVERGENCE_STEPS, tolerances=None) -> CheckResult:
    return convergence_check("continuity", lambda h: np.max(np.abs(continuity_residual(field, t, x, h))),
                             steps, tolerances)


def check_wave_equation(psi: Wavefunction, t, x, steps=CONVERGENCE_STEPS, tolerances=None,
                        label: str = "") -> CheckResult:
    return convergence_check("wave_equation", lambda h: np.max(wave_equation_residual(psi, t, x, h)),
                             steps, tolerances, state=label)


def check_noether_equality(pair: BoundaryPair, t, x, tolerances=None) -> CheckResult:
    a = noether_current(pair, t, x)
    b = conditional_current(pair, t, x)
    scale = max(float(np.max(np.abs(b))), 1.0)
    return value_check("noether_equality", np.max(np.abs(a - b)) / scale, tolerances, scale=scale)


def check_em_plane_wave(pair: BoundaryPair, t, x, tolerances=None) -> CheckResult:
    """Tensor of a plane-wave pair against p^a p^b / m (both members must be the same plane wave)."""
    p = pair.psi_i.four_momentum
    expected = np.outer(p, p) / pair.model.mass
    T = em_tensor(pair, t, x).components
    err = np.max(np.abs(T - expected.reshape((2, 2) + (1,) * (T.ndim - 2))))
    return value_check("em_tensor_plane_wave", err, tolerances)


def check_tensor_divergence(pair: BoundaryPair, t, x, steps=CONVERGENCE_STEPS, tolerances=None) -> CheckResult:
    return convergence_check("tensor_divergence", lambda h: np.max(np.abs(em_tensor_divergence(pair, t, x, h))),
                             steps, tolerances)


def check_overlap_slice_independence(psi_f: Wavefunction, psi_i: Wavefunction, t1: float, t2: float,
                                     quad: QuadSpec | None = None, tolerances=None) -> CheckResult:
    a = overlap(psi_f, psi_i, t1, quad)
    b = overlap(psi_f, psi_i, t2, quad)
    return value_check("overlap_slice_independence", abs(a - b), tolerances, t1=t1, t2=t2,
                       overlap=[a.real, a.imag])


def _interior_samples(traj: Trajectory, count: int, guard: float = 1e-6) -> list[int]:
    """Evenly spread interior samples that stay out of the crossing guard band."""
    n = len(traj)
    jj = np.abs(traj.j0 ** 2 - traj.j1 ** 2)
    scale = float(np.max(traj.j0 ** 2))
    candidates = np.linspace(1, n - 2, count + 2).round().astype(int)[1:-1]
    return [int(k) for k in candidates if jj[k] > guard * scale]


def check_guidance_eom(field: CurrentField, start, span: float, step: float, samples: int = 9,
                       tolerances=None, box=None) -> CheckResult:
    """Residual of the particle equation of motion at fixed lambda, for steps s and s/2.

    Both the tangent difference along the curve and the spacetime stencil use
    the trajectory step, so the residual is second order in it.
    """
    coarse = integrate_flowline(field, start, span, step, box=box)
    fine = integrate_flowline(field, start, span, step / 2, box=box)
    ks = _interior_samples(coarse, samples)
    r1 = max(float(np.max(np.abs(eom_residual(field, coarse, k)))) for k in ks)
    r2 = max(float(np.max(np.abs(eom_residual(field, fine, 2 * k)))) for k in ks)
    lookup = {step: r1, step / 2: r2}
    return convergence_check("guidance_eom", lambda h: lookup[h], (step, step / 2), tolerances,
                             samples=len(ks))


def check_generalized_momentum(traj: Trajectory, field: CurrentField, tolerances=None,
                               samples: int = 25) -> CheckResult:
    ks = _interior_samples(traj, samples)
    worst = max(float(np.max(np.abs(momentum_along(traj, field, k)))) for k in ks)
    return value_check("generalized_momentum_zero", worst, tolerances, samples=len(ks))


def check_source_term(traj: Trajectory, tolerances=None) -> CheckResult:
    return value_check("source_term_zero", source_term_check(traj), tolerances)


def linf_relative(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| / max |b|."""
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def check_averaging(psi_i: Wavefunction, family: FinalFamily, t, x, tolerances=None) -> CheckResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CompletenessWarning)
        avg = average_over_finals(psi_i, family, t, x, family_overlaps(psi_i, family))
    std = standard_current(psi_i, t, x)
    return value_check("averaging_reduction", linf_relative(avg.j, std), tolerances,
                       completeness_defect=avg.completeness_defect, family=family.label, members=len(family))


def check_measurement_limit(psi_i: GaussianPacket, final: GaussianPacket, quad: QuadSpec | None = None,
                            tolerances=None) -> CheckResult:
    """j0 slice at t_f of the pair (psi_i, final) against the closed-form finite-eps slice."""
    pair = BoundaryPair(psi_i, final, overlap_fi=gaussian_overlap(final, psi_i, final.t0))
    x, w, j0 = j0_slice(pair, final.t0, quad)
    oracle = measurement_slice_oracle(psi_i, final, x)
    return value_check("measurement_delta_limit", np.max(np.abs(j0 - oracle)), tolerances,
                       peak=float(np.max(oracle)), integral=float(np.sum(w * j0)))


# ---------------------------------------------------------------------------
# The identity suite for a single boundary pair

def identity_suite(pair: BoundaryPair, t, x, start, span: float, step: float,
                   steps: Sequence[float] = CONVERGENCE_STEPS, tolerances: dict | None = None,
                   slices: tuple[float, float] | None = None, box=None) -> tuple[list[CheckResult], Trajectory]:
    """Run every identity that applies to one boundary pair.

    ``t, x`` are interior probe coordinates; ``start, span, step`` define the
    guided flow line used by the particle checks.  Returns the results and the
    trajectory (integrated at ``step``).
    """
    field = ConditionalField(pair)
    results = [check_continuity(field, t, x, steps, tolerances),
               check_wave_equation(pair.psi_i, t, x, steps, tolerances, "initial"),
               check_wave_equation(pair.psi_f, t, x, steps, tolerances, "final")]
    if pair.model.kind in (KLEIN_GORDON, DIRAC):
        results.append(check_noether_equality(pair, t, x, tolerances))
        results.append(check_tensor_divergence(pair, t, x, steps, tolerances))
    if slices is not None:
        results.append(check_overlap_slice_independence(pair.psi_f, pair.psi_i, *slices, tolerances=tolerances))
    results.append(check_guidance_eom(field, start, span, step, tolerances=tolerances, box=box))
    traj = integrate_flowline(field, start, span, step, box=box)
    results.append(check_generalized_momentum(traj, field, tolerances))
    results.append(check_source_term(traj, tolerances))
    return results, traj


def check_factorization(defect: float, expect_entangled: bool, tolerances=None) -> CheckResult:
    """Product states must factorise to the tolerance; entangled ones must exceed ten times it."""
    tol = _tol("factorization_defect", tolerances)
    passed = defect > 10 * tol if expect_entangled else defect <= tol
    return CheckResult("factorization_defect", float(defect), tol, bool(passed), None,
                       {"expect_entangled": expect_entangled})
