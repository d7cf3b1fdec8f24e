"""Flow lines of a 4-current field.

The world line is integrated in a curve parameter lambda with dx/dlambda = j,
which is the guidance law u = j / rho0 reparametrised by dtau = rho0 dlambda.
This stays regular where rho0 -> 0 at a light-cone crossing, while a
proper-time parametrisation would blow up there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .currents import CurrentField, rest_density
from .spacetime import DEFAULT_NULL_TOL, CausalClass, Event, classify, lower, minkowski_dot

DEFAULT_STEP = 1e-3
DEFAULT_MAX_CURRENT = 1e6
BISECTION_TOL = 1e-10
GUARD_BAND = 1e-6


class TrajectoryError(RuntimeError):
    """Integration aborted; the samples gathered so far are attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class GuardBandError(ValueError):
    """Requested sample lies too close to a light-cone crossing."""


@dataclass(frozen=True)
class Box:
    t_min: float = -np.inf
    t_max: float = np.inf
    x_min: float = -np.inf
    x_max: float = np.inf

    def contains(self, t, x) -> bool:
        return self.t_min <= t <= self.t_max and self.x_min <= x <= self.x_max


@dataclass(frozen=True)
class Crossing:
    lam: float
    t: float
    x: float
    tau: float
    before: CausalClass
    after: CausalClass
    dtau_bracket: float      # proper time accumulated across the final bisection bracket
    bracket: float           # width of that bracket in lambda


@dataclass
class Trajectory:
    lam: np.ndarray
    t: np.ndarray
    x: np.ndarray
    j0: np.ndarray
    j1: np.ndarray
    rho0: np.ndarray
    tau: np.ndarray
    cls: np.ndarray
    tangent: np.ndarray          # dx/dlambda at each sample, shape (2, n)
    step: float
    orientation: int = 1         # +1 if lambda runs along j, -1 if against it
    crossings: list = field(default_factory=list)
    reversals: list = field(default_factory=list)   # lambda values where j0 changes sign

    def __len__(self):
        return self.lam.size

    @property
    def j(self) -> np.ndarray:
        return np.stack([self.j0, self.j1])

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.t, self.x])

    def event(self, k: int) -> Event:
        return Event(float(self.t[k]), float(self.x[k]))

    def class_sequence(self) -> list[CausalClass]:
        """Causal classes of successive segments, collapsing repeats and Null samples."""
        seq = []
        for c in self.cls:
            c = CausalClass(int(c))
            if c is CausalClass.NULL:
                continue
            if not seq or seq[-1] is not c:
                seq.append(c)
        return seq


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), k1


def _hermite(y0, y1, d0, d1, h, s):
    """Cubic Hermite interpolant on [0, h] at fraction s."""
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def integrate_flowline(field: CurrentField, start, lambda_span: float, step: float = DEFAULT_STEP,
                       null_tol: float = DEFAULT_NULL_TOL, max_current: float = DEFAULT_MAX_CURRENT,
                       box: Box | None = None, orientation: int | None = None,
                       velocity: CurrentField | None = None) -> Trajectory:
    """Integrate dx/dlambda = j(x) with fixed-step RK4.

    Parameters
    ----------
    field : CurrentField
        Supplies j and rho0 recorded at each sample.
    start : Event
        Initial event.
    lambda_span : float
        Total curve-parameter length; the trajectory has round(span/step) + 1 samples.
    step : float
        RK4 step in lambda.
    orientation : int, optional
        +1 to follow j, -1 to run against it. By default the curve is oriented so
        that it leaves `start` forwards in time (j0 > 0 there).
    velocity : CurrentField, optional
        Drives the curve instead of `field`. Used only to build deliberately
        non-guided test curves.

    Raises
    ------
    TrajectoryError
        If |j| exceeds `max_current` or the curve leaves `box`.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if not lambda_span > 0:
        raise ValueError("lambda_span must be positive")
    box = box or Box()
    drive = velocity if velocity is not None else field
    y = np.array([float(start[0]), float(start[1])])
    if orientation is None:
        orientation = 1 if float(drive.j(y[0], y[1])[0]) >= 0 else -1
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")

    def rhs(v):
        return orientation * np.asarray(drive.j(v[0], v[1]), dtype=float)

    n = int(round(lambda_span / step))
    pts = np.empty((n + 1, 2))
    tans = np.empty((n + 1, 2))
    pts[0] = y

    def fail(msg, k):
        partial = _assemble(field, pts[:k + 1], tans[:k + 1], step, orientation, null_tol)
        raise TrajectoryError(msg, partial)

    for k in range(n):
        y_next, tan = _rk4_step(rhs, pts[k], step)
        tans[k] = tan
        if not np.all(np.isfinite(y_next)) or np.max(np.abs(tan)) > max_current:
            fail(f"runaway current at lambda={k * step:.6g} (|j| > {max_current:g})", k)
        if not box.contains(*y_next):
            fail(f"flow line left the spacetime box at lambda={(k + 1) * step:.6g}", k)
        pts[k + 1] = y_next
    tans[n] = rhs(pts[n])
    return _assemble(field, pts, tans, step, orientation, null_tol)


def _assemble(field, pts, tans, step, orientation, null_tol) -> Trajectory:
    n = pts.shape[0]
    lam = step * np.arange(n)
    jj = np.asarray(field.j(pts[:, 0], pts[:, 1]), dtype=float)
    rho = rest_density(jj)
    cls = classify(jj, null_tol)
    tau = np.zeros(n)
    if n > 1:
        # Simpson on each step with the midpoint from the Hermite cubic through the samples
        mid = 0.5 * (pts[:-1] + pts[1:]) + step * (tans[:-1] - tans[1:]) / 8
        rho_mid = rest_density(field.j(mid[:, 0], mid[:, 1]))
        tau[1:] = np.cumsum(step / 6 * (rho[:-1] + 4 * rho_mid + rho[1:]))
    traj = Trajectory(lam, pts[:, 0].copy(), pts[:, 1].copy(), jj[0], jj[1], rho, tau, cls,
                      tans.T.copy(), step, orientation)
    traj.crossings = _find_crossings(field, traj)
    s = np.sign(jj[0])
    traj.reversals = [float(lam[k] + step * jj[0][k] / (jj[0][k] - jj[0][k + 1]))
                      for k in range(n - 1) if s[k] * s[k + 1] < 0]
    return traj


def _find_crossings(field: CurrentField, traj: Trajectory) -> list[Crossing]:
    jj = minkowski_dot(traj.j, traj.j)
    sgn = np.sign(jj)
    out = []
    h = traj.step
    for k in range(len(traj) - 1):
        if sgn[k] * sgn[k + 1] >= 0:
            continue
        y0, y1 = traj.points[:, k], traj.points[:, k + 1]
        d0, d1 = traj.tangent[:, k], traj.tangent[:, k + 1]

        def at(s):
            p = _hermite(y0, y1, d0, d1, h, s)
            v = np.asarray(field.j(p[0], p[1]), dtype=float)
            return p, float(minkowski_dot(v, v))

        lo, hi = 0.0, 1.0
        f_lo = jj[k]
        while (hi - lo) * h > BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            _, f_mid = at(mid)
            if f_mid == 0.0:
                lo = hi = mid
                break
            if np.sign(f_mid) == np.sign(f_lo):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        s_c = 0.5 * (lo + hi)
        p_c, _ = at(s_c)
        # tau at the crossing and across the bracket, by Simpson on the interpolant
        def tau_between(a, b):
            pa, pm, pb = (_hermite(y0, y1, d0, d1, h, s) for s in (a, 0.5 * (a + b), b))
            r = rest_density(field.j(np.array([pa[0], pm[0], pb[0]]), np.array([pa[1], pm[1], pb[1]])))
            return (b - a) * h / 6 * (r[0] + 4 * r[1] + r[2])

        tau_c = traj.tau[k] + _composite_tau(tau_between, 0.0, s_c)
        dtau = tau_between(lo, hi)
        out.append(Crossing(traj.lam[k] + s_c * h, float(p_c[0]), float(p_c[1]), float(tau_c),
                            CausalClass(int(np.sign(jj[k]))), CausalClass(int(np.sign(jj[k + 1]))),
                            float(dtau), (hi - lo) * h))
    return out


def _composite_tau(piece, a, b, parts=8):
    edges = np.linspace(a, b, parts + 1)
    return sum(piece(edges[i], edges[i + 1]) for i in range(parts))


def integrate_proper_time(field: CurrentField, start, tau_span: float, step: float,
                          orientation: int = 1) -> np.ndarray:
    """Integrate dx/dtau = j / rho0 with RK4; returns points of shape (n + 1, 2).

    Singular at crossings, so only meaningful on segments where rho0 stays away from 0.
    """
    def rhs(v):
        j = np.asarray(field.j(v[0], v[1]), dtype=float)
        return orientation * j / rest_density(j)

    n = int(round(tau_span / step))
    pts = np.empty((n + 1, 2))
    pts[0] = [float(start[0]), float(start[1])]
    for k in range(n):
        pts[k + 1] = _rk4_step(rhs, pts[k], step)[0]
    return pts


# ---------------------------------------------------------------------------
# Equation-of-motion checks along a curve

def _check_interior(traj: Trajectory, k: int, guard: float):
    if not 0 < k < len(traj) - 1:
        raise IndexError(f"sample {k} is not an interior sample of a {len(traj)}-sample trajectory")
    scale = float(np.max(traj.j0 ** 2))
    jj = abs(float(minkowski_dot(traj.j[:, k], traj.j[:, k])))
    if jj < guard * scale:
        raise GuardBandError(f"sample {k} lies within the crossing guard band (|j.j| = {jj:.3e})")


def curve_velocity(traj: Trajectory, k: int) -> np.ndarray:
    """Unit 4-velocity of the curve itself at sample k, oriented along j."""
    t = traj.orientation * traj.tangent[:, k]
    return t / np.sqrt(abs(float(minkowski_dot(t, t))))


def eom_residual(field: CurrentField, traj: Trajectory, k: int, h: float | None = None,
                 guard: float = GUARD_BAND) -> np.ndarray:
    """LHS - RHS of the particle equation of motion at interior sample k (lower index).

    LHS is d(rho0 u_alpha)/dtau by a central difference along the curve; RHS is
    +-d_alpha rho0 + u^beta (d_beta j_alpha - d_alpha j_beta) by central differences
    in spacetime with step h (default: the trajectory step), upper sign for
    timelike u.
    """
    _check_interior(traj, k, guard)
    h = traj.step if h is None else h

    def p_lower(i):
        return traj.rho0[i] * lower(curve_velocity(traj, i))

    u = curve_velocity(traj, k)
    speed = np.sqrt(abs(float(minkowski_dot(traj.tangent[:, k], traj.tangent[:, k]))))
    lhs = traj.orientation * (p_lower(k + 1) - p_lower(k - 1)) / (2 * traj.step * speed)

    t0, x0 = traj.t[k], traj.x[k]
    tt = np.array([t0 + h, t0 - h, t0, t0])
    xx = np.array([x0, x0, x0 + h, x0 - h])
    jv = np.asarray(field.j(tt, xx), dtype=float)
    rho = rest_density(jv)
    jl = lower(jv)  # j_alpha at the four stencil points
    d_rho = np.array([(rho[0] - rho[1]) / (2 * h), (rho[2] - rho[3]) / (2 * h)])
    # dj[beta, alpha] = d_beta j_alpha
    dj = np.array([(jl[:, 0] - jl[:, 1]) / (2 * h), (jl[:, 2] - jl[:, 3]) / (2 * h)])
    sign = 1.0 if minkowski_dot(u, u) > 0 else -1.0
    rhs = sign * d_rho + np.einsum("b,ba->a", u, dj) - np.einsum("b,ab->a", u, dj)
    return lhs - rhs


def momentum_along(traj: Trajectory, field: CurrentField, k: int, guard: float = GUARD_BAND) -> np.ndarray:
    """Generalised momentum p^alpha = rho0 u^alpha - j^alpha with u from the curve tangent."""
    if 0 < k < len(traj) - 1:
        _check_interior(traj, k, guard)
    j = np.asarray(field.j(traj.t[k], traj.x[k]), dtype=float)
    return rest_density(j) * curve_velocity(traj, k) - j


class PerturbedVelocity(CurrentField):
    """Test harness: v = j + delta * B j with B the boost generator (swap components).

    The resulting curve has u = v/|v| instead of j / rho0, with |u - j/rho0| of order delta.
    """

    def __init__(self, field: CurrentField, delta: float = 0.1):
        self.field = field
        self.delta = delta

    def j(self, t, x=None):
        j = np.asarray(self.field.j(t, x), dtype=float)
        return j + self.delta * j[::-1]
