"""Particle Lagrangian, field Lagrangian densities, Noether current and energy-momentum tensor.

Field Lagrangians are written as L = Re[Z / <f|i>] with Z bilinear in the
boundary wavefunctions:

    Klein-Gordon  Z = (1/2m) (d_a psi_f^* d^a psi_i - m^2 psi_f^* psi_i)
    Dirac         Z = psibar_f (i gamma^a d_a - m) psi_i

The Klein-Gordon form is the first-order one; it differs from the symmetrised
double-bidirectional-derivative form only by a total divergence, so the field
equations, the Noether current and the conserved tensor are unaffected. The
real part is split as (Z/c + conj(Z/c))/2, which exposes four independent
field slots: psi_i, psi_f^* (psibar_f for Dirac) and their conjugates. The
derivatives dL/d(d_a phi) needed by the Noether and canonical-tensor formulas
are taken numerically slot by slot. Because L is affine in every single slot
component, a central difference is exact up to rounding, which makes this an
independent route to the closed-form bilinears.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .currents import BoundaryPair, FinalFamily, _coords, family_overlaps, rest_density
from .spacetime import CausalClass, causal_class, lower, minkowski_dot
from .states import DIRAC, GAMMA, KLEIN_GORDON, Wavefunction

METRIC = np.diag([1.0, -1.0])
SLOT_STEP = 1.0


# ---------------------------------------------------------------------------
# Particle term

@dataclass(frozen=True)
class ParticleKinematics:
    u: np.ndarray
    j: np.ndarray

    def __init__(self, u, j):
        object.__setattr__(self, "u", np.asarray(u, dtype=float))
        object.__setattr__(self, "j", np.asarray(j, dtype=float))

    @property
    def rho0(self) -> float:
        return float(rest_density(self.j))

    @property
    def u_class(self) -> CausalClass:
        return causal_class(self.u, 0.0)

    @property
    def j_class(self) -> CausalClass:
        return causal_class(self.j, 0.0)


def _branch(c: CausalClass, what: str) -> float:
    if c is CausalClass.NULL:
        raise ValueError(f"{what} is null; the Lagrangian branch is undefined")
    return 1.0 if c is CausalClass.TIMELIKE else -1.0


def particle_lagrangian(k: ParticleKinematics) -> float:
    """-+ rho0 |u.u|^(1/2) + u.j, upper sign for timelike u."""
    s = _branch(k.u_class, "u")
    uu = float(minkowski_dot(k.u, k.u))
    return -s * k.rho0 * np.sqrt(abs(uu)) + float(minkowski_dot(k.u, k.j))


def dL_du(k: ParticleKinematics) -> np.ndarray:
    """dL/du^alpha = j_alpha - rho0 u_alpha (lower index; exact for unit |u.u|)."""
    _branch(k.u_class, "u")
    return lower(k.j) - k.rho0 * lower(k.u)


def dL_dj(k: ParticleKinematics) -> np.ndarray:
    """dL/dj^beta = u_beta -+ (u.u) j_beta / rho0 (lower index), upper sign for timelike j."""
    s = _branch(k.j_class, "j")
    _branch(k.u_class, "u")
    uu = float(minkowski_dot(k.u, k.u))
    return lower(k.u) - s * uu * lower(k.j) / k.rho0


def generalized_momentum(k: ParticleKinematics) -> np.ndarray:
    """p^alpha = rho0 u^alpha - j^alpha."""
    return k.rho0 * k.u - k.j


# ---------------------------------------------------------------------------
# Field slots

class _Slots(NamedTuple):
    vals: list      # per slot, array (ncomp, *grid)
    grads: list     # per slot, covariant gradient (2, ncomp, *grid)
    charges: tuple  # phase charge of each slot


def _slot_fields(pair: BoundaryPair, t, x) -> _Slots:
    """[psi_i, B, conj(psi_i), conj(B)] with B = psi_f^* (scalar) or psibar_f (Dirac)."""
    ji, jf = pair.psi_i.jet(t, x), pair.psi_f.jet(t, x)
    a, da = ji.val, ji.grad()
    b, db = np.conj(jf.val), np.conj(jf.grad())
    if pair.model.kind == DIRAC:
        b = np.einsum("a...,ab->b...", b, GAMMA[0])
        db = np.einsum("ka...,ab->kb...", db, GAMMA[0])
    return _Slots([a, b, np.conj(a), np.conj(b)], [da, db, np.conj(da), np.conj(db)], (1, -1, -1, 1))


def _z_kernel(model, a, da, b, db):
    m = model.mass
    if model.kind == KLEIN_GORDON:
        dd = db[0, 0] * da[0, 0] - db[1, 0] * da[1, 0]
        return (dd - m * m * b[0] * a[0]) / (2 * m)
    if model.kind == DIRAC:
        ga = 1j * (np.einsum("ab,b...->a...", GAMMA[0], da[0]) + np.einsum("ab,b...->a...", GAMMA[1], da[1]))
        return np.sum(b * (ga - m * a), axis=0)
    raise ValueError("field Lagrangians are defined for the Klein-Gordon and Dirac models only")


def _lagrangian_slots(model, vals, grads, c):
    """(Z(a, b)/c + conj(Z)(a~, b~)/conj(c)) / 2, complex-linear in every slot."""
    z = _z_kernel(model, vals[0], grads[0], vals[1], grads[1])
    zc = np.conj(_z_kernel(model, np.conj(vals[2]), np.conj(grads[2]), np.conj(vals[3]), np.conj(grads[3])))
    return 0.5 * (z / c + zc / np.conj(c))


def _slot_derivatives(pair: BoundaryPair, slots: _Slots):
    """dL/d(d_beta phi_{s,c}) for every slot s and component c: list of arrays (2, ncomp, *grid)."""
    out = []
    c = pair.overlap_fi
    for s in range(4):
        d = np.zeros_like(slots.grads[s], dtype=complex)
        for beta in range(2):
            for comp in range(slots.grads[s].shape[1]):
                plus = [g.copy() for g in slots.grads]
                minus = [g.copy() for g in slots.grads]
                plus[s][beta, comp] += SLOT_STEP
                minus[s][beta, comp] -= SLOT_STEP
                lp = _lagrangian_slots(pair.model, slots.vals, plus, c)
                lm = _lagrangian_slots(pair.model, slots.vals, minus, c)
                d[beta, comp] = (lp - lm) / (2 * SLOT_STEP)
        out.append(d)
    return out


def _require_field_model(pair: BoundaryPair):
    if pair.model.kind not in (KLEIN_GORDON, DIRAC):
        raise ValueError("field Lagrangian densities exist for the Klein-Gordon and Dirac models only")


def field_lagrangian_density(pair: BoundaryPair, t, x=None) -> np.ndarray:
    _require_field_model(pair)
    t, x = _coords(t, x)
    s = _slot_fields(pair, t, x)
    return np.real(_lagrangian_slots(pair.model, s.vals, s.grads, pair.overlap_fi))


def noether_current(pair: BoundaryPair, t, x=None) -> np.ndarray:
    """Conserved current of the global phase symmetry, from the Lagrangian's derivative slots.

    J^alpha = -i sum_s q_s dL/d(d_alpha phi_s) phi_s, with charges q = +1 for psi_i and
    psi_f and -1 for their conjugates. The overall sign is the one for which
    positive-energy plane waves carry positive density, matching the current
    convention of `currents`.
    """
    _require_field_model(pair)
    t, x = _coords(t, x)
    slots = _slot_fields(pair, t, x)
    derivs = _slot_derivatives(pair, slots)
    acc = 0
    for q, phi, d in zip(slots.charges, slots.vals, derivs):
        # d is covariant-slot derivative: dL/d(d_beta phi) carries an upper index beta
        acc = acc + q * np.sum(d * phi[None], axis=1)
    return np.real(-1j * acc)


@dataclass(frozen=True)
class EnergyMomentumTensor:
    components: np.ndarray   # T^{alpha beta}, shape (2, 2, *grid)
    provenance: str


def em_tensor(pair: BoundaryPair, t, x=None) -> EnergyMomentumTensor:
    """Canonical field tensor T^{ab} = sum_s (d^a phi_s) dL/d(d_b phi_s) - g^{ab} L."""
    _require_field_model(pair)
    t, x = _coords(t, x)
    slots = _slot_fields(pair, t, x)
    derivs = _slot_derivatives(pair, slots)
    lag = _lagrangian_slots(pair.model, slots.vals, slots.grads, pair.overlap_fi)
    tens = 0
    for g, d in zip(slots.grads, derivs):
        g_up = np.stack([g[0], -g[1]])
        tens = tens + np.einsum("ac...,bc...->ab...", g_up, d)
    tens = tens - METRIC.reshape((2, 2) + (1,) * t.ndim) * lag
    prov = "standard" if pair.psi_f is pair.psi_i else "conditional"
    return EnergyMomentumTensor(np.real(tens), prov)


def _tensor_complex(model, jf, ji, ndim):
    """psi_f^* T-hat^{ab} psi_i before division by <f|i> and before the real part."""
    m = model.mass
    dfi = np.stack([jf.dt, -jf.dx]).conj()   # d^a psi_f^*
    dii = np.stack([ji.dt, -ji.dx])          # d^a psi_i
    g = METRIC.reshape((2, 2) + (1,) * ndim)
    if model.kind == KLEIN_GORDON:
        sym = (dfi[:, None, 0] * dii[None, :, 0] + dfi[None, :, 0] * dii[:, None, 0]) / (2 * m)
        z = (dfi[0, 0] * dii[0, 0] - dfi[1, 0] * dii[1, 0] - m * m * np.conj(jf.val[0]) * ji.val[0]) / (2 * m)
        return sym - g * z
    fbar = np.einsum("a...,ab->b...", np.conj(jf.val), GAMMA[0])
    # psibar_f i gamma^b d^a psi_i - g^{ab} psibar_f (i gamma.d - m) psi_i
    gd = np.einsum("bcd,ad...->abc...", GAMMA, dii)
    body = 1j * np.einsum("c...,abc...->ab...", fbar, gd)
    z = _z_kernel(model, ji.val, ji.grad(), fbar, None)
    return body - g * z


def tensor_bilinear(pair: BoundaryPair, t, x=None) -> np.ndarray:
    """Closed-form Re[psi_f^* T-hat^{ab} psi_i / <f|i>] for the free-field operator."""
    _require_field_model(pair)
    t, x = _coords(t, x)
    jf, ji = pair.psi_f.jet(t, x), pair.psi_i.jet(t, x)
    return np.real(_tensor_complex(pair.model, jf, ji, t.ndim) / pair.overlap_fi)


def em_tensor_divergence(pair: BoundaryPair, t, x=None, h: float = 1e-3) -> np.ndarray:
    """d_b T^{ab} by central differences, shape (2, *grid)."""
    t, x = _coords(t, x)
    tp = em_tensor(pair, t + h, x).components
    tm = em_tensor(pair, t - h, x).components
    xp = em_tensor(pair, t, x + h).components
    xm = em_tensor(pair, t, x - h).components
    return (tp[:, 0] - tm[:, 0]) / (2 * h) + (xp[:, 1] - xm[:, 1]) / (2 * h)


def standard_pair(psi: Wavefunction) -> BoundaryPair:
    """f = i with unit overlap: conditional quantities reduce to standard ones."""
    return BoundaryPair(psi, psi, overlap_fi=1.0)


def average_tensor_over_finals(psi_i: Wavefunction, family: FinalFamily, t, x=None,
                               overlaps: np.ndarray | None = None) -> np.ndarray:
    """sum_f w_f |<f|i>|^2 T[f, i] for a final family; compare with T[i, i]."""
    t, x = _coords(t, x)
    if overlaps is None:
        overlaps = family_overlaps(psi_i, family)
    ji = psi_i.jet(t, x)
    acc = np.zeros((2, 2) + t.shape)
    for f, ov, w in zip(family.members, overlaps, family.weights):
        # |<f|i>|^2 Re[T_fi / <f|i>] = Re[T_fi conj(<f|i>)]
        acc += w * np.real(_tensor_complex(psi_i.model, f.jet(t, x), ji, t.ndim) * np.conj(ov))
    return acc


def source_term_check(traj, guard: float = 1e-6) -> float:
    """max |dL/dj| along a trajectory with u from the curve tangent, outside the crossing guard band."""
    scale = float(np.max(traj.j0 ** 2))
    worst = 0.0
    for k in range(len(traj)):
        j = traj.j[:, k]
        if abs(float(minkowski_dot(j, j))) < guard * scale:
            continue
        tan = traj.orientation * traj.tangent[:, k]
        u = tan / np.sqrt(abs(float(minkowski_dot(tan, tan))))
        worst = max(worst, float(np.max(np.abs(dL_dj(ParticleKinematics(u, j))))))
    return worst
