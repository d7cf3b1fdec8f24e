"""Free-particle wavefunctions for the Schrodinger, Klein-Gordon and Dirac models.

Every wavefunction exposes a `Jet`: the value and all first and second partial
derivatives at arbitrary (t, x) arrays. Derivatives are analytic: closed form
for Gaussians and plane waves, differentiation under the integral sign for
momentum-space packets. Values always carry a leading component axis (length 1
for scalar models, 2 for Dirac spinors).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .spacetime import Event

SCHRODINGER = "schrodinger"
KLEIN_GORDON = "klein_gordon"
DIRAC = "dirac"
MODEL_KINDS = (SCHRODINGER, KLEIN_GORDON, DIRAC)

DEFAULT_NODES = 96
MIN_NODES = 8
DEFAULT_FD_STEP = 1e-3
OVERLAP_FLOOR = 1e-8
SUPPORT_NSIG = 12.0

# Dirac matrices in 1+1: gamma0 = sigma_z, gamma1 = i sigma_y.
# {gamma^mu, gamma^nu} = 2 g^{mu nu} with g = diag(1, -1).
GAMMA0 = np.array([[1, 0], [0, -1]], dtype=complex)
GAMMA1 = np.array([[0, 1], [-1, 0]], dtype=complex)
GAMMA = np.stack([GAMMA0, GAMMA1])


class OverlapFloorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class WaveModel:
    kind: str
    mass: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown wave model {self.kind!r}; expected one of {MODEL_KINDS}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    @property
    def ncomp(self) -> int:
        return 2 if self.kind == DIRAC else 1

    @property
    def relativistic(self) -> bool:
        return self.kind != SCHRODINGER

    def energy(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == SCHRODINGER:
            return p * p / (2 * self.mass)
        return np.sqrt(p * p + self.mass ** 2)

    def group_velocity(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == SCHRODINGER:
            return p / self.mass
        return p / self.energy(p)


def dirac_spinor(p, m: float) -> np.ndarray:
    """Positive-energy spinor u(p) with ubar u = 1, shape (2, *p.shape)."""
    p = np.asarray(p, dtype=float)
    e = np.sqrt(p * p + m * m)
    n = np.sqrt(2 * m * (e + m))
    return np.stack([(e + m) / n, p / n]).astype(complex)


@dataclass
class Jet:
    """Value and partial derivatives; each array has shape (ncomp, *grid)."""

    val: np.ndarray
    dt: np.ndarray
    dx: np.ndarray
    dtt: np.ndarray
    dtx: np.ndarray
    dxx: np.ndarray

    def grad(self) -> np.ndarray:
        """Covariant gradient d_alpha psi, shape (2, ncomp, *grid)."""
        return np.stack([self.dt, self.dx])

    def conj(self) -> "Jet":
        return Jet(*(np.conj(a) for a in self._parts()))

    def scaled(self, c) -> "Jet":
        return Jet(*(c * a for a in self._parts()))

    def __add__(self, other: "Jet") -> "Jet":
        return Jet(*(a + b for a, b in zip(self._parts(), other._parts())))

    def _parts(self):
        return (self.val, self.dt, self.dx, self.dtt, self.dtx, self.dxx)


def _grid(t, x):
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    return t, x


class Wavefunction:
    """Base class. Subclasses implement `jet`, `support` and `max_wavenumber`."""

    model: WaveModel

    def jet(self, t, x) -> Jet:
        raise NotImplementedError

    def support(self, t: float, nsig: float = SUPPORT_NSIG):
        """Interval outside which the amplitude is negligible, or None if unbounded."""
        return None

    def max_wavenumber(self, nsig: float = SUPPORT_NSIG) -> float:
        raise NotImplementedError

    def __call__(self, t, x) -> np.ndarray:
        return self.jet(t, x).val

    def evaluate(self, e: Event):
        v = self.jet(e[0], e[1]).val
        return complex(v[0]) if self.model.ncomp == 1 else v.astype(complex)

    def gradient(self, e: Event) -> np.ndarray:
        """d_alpha psi at one event, shape (2, ncomp)."""
        return self.jet(e[0], e[1]).grad()

    def __mul__(self, c) -> "Superposition":
        return Superposition([(complex(c), self)])

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# Schrodinger Gaussian, closed form

def _gauss_logs(t, x, x0, sigma, p0, t0, m):
    s = 1 + 1j * (t - t0) / (2 * m * sigma ** 2)
    a = 4 * sigma ** 2 * s
    da = 2j / m
    z = x - x0 - 2j * sigma ** 2 * p0
    logval = -0.25 * np.log(2 * np.pi * sigma ** 2) - 0.5 * np.log(s) - z * z / a - (sigma * p0) ** 2
    lx = -2 * z / a
    lxx = -2 / a
    lt = -0.5 * (1j / (2 * m * sigma ** 2)) / s + z * z * da / a ** 2
    ltx = 2 * z * da / a ** 2
    ltt = 0.5 * (1j / (2 * m * sigma ** 2)) ** 2 / s ** 2 - 2 * z * z * da ** 2 / a ** 3
    return logval, lt, lx, ltt, ltx, lxx


def free_gaussian(t, x, x0, sigma, p0=0.0, t0=0.0, m=1.0):
    """Unit-normalised freely spreading Gaussian; broadcasts over all arguments.

    At t = t0 the density is a normal distribution with mean x0 and standard
    deviation sigma, and the packet carries mean momentum p0.
    """
    logval = _gauss_logs(t, x, x0, sigma, p0, t0, m)[0]
    return np.exp(logval)


class GaussianPacket(Wavefunction):
    def __init__(self, model: WaveModel, x0: float, sigma: float, p0: float = 0.0, t0: float = 0.0):
        if model.kind != SCHRODINGER:
            raise ValueError("position-space Gaussians are only available for the Schrodinger model; "
                             "use a momentum-space packet for Klein-Gordon or Dirac")
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.model = model
        self.x0, self.sigma, self.p0, self.t0 = float(x0), float(sigma), float(p0), float(t0)

    def __repr__(self):
        return f"GaussianPacket(x0={self.x0}, sigma={self.sigma}, p0={self.p0}, t0={self.t0}, m={self.model.mass})"

    def jet(self, t, x) -> Jet:
        t, x = _grid(t, x)
        logval, lt, lx, ltt, ltx, lxx = _gauss_logs(t, x, self.x0, self.sigma, self.p0, self.t0, self.model.mass)
        v = np.exp(logval)
        parts = (v, v * lt, v * lx, v * (lt * lt + ltt), v * (lt * lx + ltx), v * (lx * lx + lxx))
        return Jet(*(p[None] for p in parts))

    def width(self, t: float) -> float:
        tau = (t - self.t0) / (2 * self.model.mass * self.sigma ** 2)
        return self.sigma * np.hypot(1.0, tau)

    def center(self, t: float) -> float:
        return self.x0 + self.p0 * (t - self.t0) / self.model.mass

    def support(self, t, nsig=SUPPORT_NSIG):
        c, w = self.center(t), self.width(t)
        return c - nsig * w, c + nsig * w

    def max_wavenumber(self, nsig=SUPPORT_NSIG):
        return abs(self.p0) + nsig / (2 * self.sigma)


# ---------------------------------------------------------------------------
# Momentum-space packets by Gauss-Hermite quadrature

class MomentumPacket(Wavefunction):
    """psi(t, x) = C * int dp a(p) w(p) exp(-i(E(p) t - p x)).

    a(p) = exp(-(p - p0)^2 / (4 sigma_p^2)) exp(-i(p x0 - E(p) t0)), so the packet
    is centred on x0 at t = t0. w(p) is 1 for scalar models and the positive-energy
    spinor u(p) for Dirac. The integral is a Gauss-Hermite sum over `nodes` nodes,
    which is an exact finite superposition of plane-wave solutions.
    """

    def __init__(self, model: WaveModel, p0: float, sigma_p: float, x0: float = 0.0,
                 t0: float = 0.0, nodes: int = DEFAULT_NODES):
        if not sigma_p > 0:
            raise ValueError(f"sigma_p must be positive, got {sigma_p}")
        if nodes < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} quadrature nodes, got {nodes}")
        self.model = model
        self.p0, self.sigma_p, self.x0, self.t0 = float(p0), float(sigma_p), float(x0), float(t0)
        self.nodes = int(nodes)
        s, w = np.polynomial.hermite.hermgauss(self.nodes)
        p = self.p0 + 2 * self.sigma_p * s
        e = model.energy(p)
        weights = 2 * self.sigma_p * w * np.exp(-1j * (p * self.x0 - e * self.t0))
        self._p, self._e = p, e
        self.norm_const = 1.0 / np.sqrt(self._norm_squared())
        spin = dirac_spinor(p, model.mass) if model.kind == DIRAC else np.ones((1, p.size), complex)
        self._coef = self.norm_const * weights[None, :] * spin  # (ncomp, nodes)

    def __repr__(self):
        return (f"MomentumPacket({self.model.kind}, p0={self.p0}, sigma_p={self.sigma_p}, "
                f"x0={self.x0}, t0={self.t0}, nodes={self.nodes})")

    def _norm_squared(self) -> float:
        # int |a|^2 g(p) dp with weight exp(-(p-p0)^2/(2 sigma_p^2)); g from the model's j0 product
        s, w = np.polynomial.hermite.hermgauss(self.nodes)
        p = self.p0 + np.sqrt(2) * self.sigma_p * s
        if self.model.kind == SCHRODINGER:
            g = np.ones_like(p)
        else:
            g = self.model.energy(p) / self.model.mass
        return float(2 * np.pi * np.sqrt(2) * self.sigma_p * np.sum(w * g))

    def momentum_amplitude(self, p):
        """Normalised a(p) (scalar part), for analytic overlaps in momentum space."""
        p = np.asarray(p, dtype=float)
        e = self.model.energy(p)
        return self.norm_const * np.exp(-(p - self.p0) ** 2 / (4 * self.sigma_p ** 2)
                                        - 1j * (p * self.x0 - e * self.t0))

    def jet(self, t, x, chunk: int = 8192) -> Jet:
        t, x = _grid(t, x)
        shape = t.shape
        tf, xf = t.ravel(), x.ravel()
        p, e = self._p, self._e
        out = np.empty((6, self.model.ncomp, tf.size), dtype=complex)
        mults = (np.ones_like(p), -1j * e, 1j * p, -e * e, e * p, -p * p)
        for lo in range(0, tf.size, chunk):
            sl = slice(lo, lo + chunk)
            ph = np.exp(1j * (np.outer(xf[sl], p) - np.outer(tf[sl], e)))  # (n, nodes)
            for k, mlt in enumerate(mults):
                out[k, :, sl] = (self._coef * mlt) @ ph.T
        return Jet(*(o.reshape((self.model.ncomp,) + shape) for o in out))

    def _spread(self, t):
        sx0 = 1.0 / (2 * self.sigma_p)
        m = self.model.mass
        if self.model.kind == SCHRODINGER:
            dv = 1.0 / m
        else:
            pmin = max(0.0, abs(self.p0) - 3 * self.sigma_p)
            dv = m * m / (pmin * pmin + m * m) ** 1.5
        return np.hypot(sx0, self.sigma_p * dv * (t - self.t0))

    def support(self, t, nsig=SUPPORT_NSIG):
        # The finite node sum only represents the packet within roughly
        # sqrt(2 n) / (2 sigma_p) of the (dispersing) centre; beyond that it
        # produces spurious images, so the support is clipped there.
        c = self.x0 + float(self.model.group_velocity(self.p0)) * (t - self.t0)
        w = self._spread(t)
        valid = 0.9 * np.sqrt(2 * self.nodes) / (2 * self.sigma_p) + nsig * (w - 1 / (2 * self.sigma_p))
        half = min(nsig * w, valid)
        return c - half, c + half

    def max_wavenumber(self, nsig=SUPPORT_NSIG):
        return abs(self.p0) + nsig * self.sigma_p


# ---------------------------------------------------------------------------
# Plane waves

class PlaneWave(Wavefunction):
    """exp(-i(E t - p x)) times u(p) for Dirac. `energy_shift` breaks the dispersion
    relation on purpose (negative control for residual checks)."""

    def __init__(self, model: WaveModel, p: float, phase: float = 0.0, energy_shift: float = 0.0):
        self.model = model
        self.p = float(p)
        self.phase = float(phase)
        self.energy_shift = float(energy_shift)
        self.energy = float(model.energy(self.p)) + self.energy_shift
        if model.kind == DIRAC:
            self._spin = dirac_spinor(self.p, model.mass)
        else:
            self._spin = np.ones(1, complex)

    def __repr__(self):
        return f"PlaneWave({self.model.kind}, p={self.p}, m={self.model.mass})"

    @property
    def four_momentum(self) -> np.ndarray:
        return np.array([self.energy, self.p])

    def jet(self, t, x) -> Jet:
        t, x = _grid(t, x)
        e, p = self.energy, self.p
        v = np.exp(1j * (p * x - e * t + self.phase))
        spin = self._spin.reshape((-1,) + (1,) * v.ndim)
        base = spin * v[None]
        return Jet(base, -1j * e * base, 1j * p * base, -e * e * base, e * p * base, -p * p * base)

    def max_wavenumber(self, nsig=SUPPORT_NSIG):
        return abs(self.p)


# ---------------------------------------------------------------------------
# Linear combinations

class Superposition(Wavefunction):
    """Finite linear combination of solutions sharing one model; itself a solution."""

    def __init__(self, terms: Sequence[tuple[complex, Wavefunction]]):
        terms = [(complex(c), w) for c, w in terms]
        if not terms:
            raise ValueError("empty superposition")
        kinds = {(w.model.kind, w.model.mass) for _, w in terms}
        if len(kinds) != 1:
            raise ValueError(f"superposed wavefunctions must share one model, got {sorted(kinds)}")
        self.model = terms[0][1].model
        self.terms = terms

    def __repr__(self):
        return f"Superposition({len(self.terms)} terms, {self.model.kind})"

    def jet(self, t, x) -> Jet:
        out = None
        for c, w in self.terms:
            j = w.jet(t, x).scaled(c)
            out = j if out is None else out + j
        return out

    def support(self, t, nsig=SUPPORT_NSIG):
        spans = [w.support(t, nsig) for _, w in self.terms]
        if any(s is None for s in spans):
            return None
        return min(s[0] for s in spans), max(s[1] for s in spans)

    def max_wavenumber(self, nsig=SUPPORT_NSIG):
        return max(w.max_wavenumber(nsig) for _, w in self.terms)


# ---------------------------------------------------------------------------
# Packet specifications (configuration-facing)

PACKET_KINDS = ("gaussian_position", "gaussian_momentum", "plane_wave")


@dataclass
class PacketSpec:
    kind: str
    model: WaveModel
    params: dict = field(default_factory=dict)

    _REQUIRED = {
        "gaussian_position": ("x0", "sigma"),
        "gaussian_momentum": ("p0", "sigma_p"),
        "plane_wave": ("p",),
    }
    _OPTIONAL = {
        "gaussian_position": {"p0": 0.0, "t0": 0.0},
        "gaussian_momentum": {"x0": 0.0, "t0": 0.0, "nodes": DEFAULT_NODES},
        "plane_wave": {"phase": 0.0, "energy_shift": 0.0},
    }

    def __post_init__(self):
        if self.kind not in PACKET_KINDS:
            raise ValueError(f"unknown packet kind {self.kind!r}; expected one of {PACKET_KINDS}")
        missing = [k for k in self._REQUIRED[self.kind] if k not in self.params]
        if missing:
            raise ValueError(f"{self.kind} packet is missing {missing}")
        allowed = set(self._REQUIRED[self.kind]) | set(self._OPTIONAL[self.kind])
        unknown = sorted(set(self.params) - allowed)
        if unknown:
            raise ValueError(f"unknown {self.kind} parameter(s) {unknown}")
        merged = dict(self._OPTIONAL[self.kind])
        merged.update(self.params)
        self.params = merged
        if self.kind == "gaussian_position" and not self.params["sigma"] > 0:
            raise ValueError(f"sigma must be positive, got {self.params['sigma']}")
        if self.kind == "gaussian_momentum":
            if not self.params["sigma_p"] > 0:
                raise ValueError(f"sigma_p must be positive, got {self.params['sigma_p']}")
            if int(self.params["nodes"]) < MIN_NODES:
                raise ValueError(f"nodes must be at least {MIN_NODES}, got {self.params['nodes']}")
        if self.kind == "gaussian_position" and self.model.kind != SCHRODINGER:
            raise ValueError("gaussian_position packets are only supported for the Schrodinger model")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict, model: WaveModel) -> "PacketSpec":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise ValueError("packet is missing 'kind'")
        return cls(kind, model, d)


def build_wavefunction(spec: PacketSpec) -> Wavefunction:
    p = spec.params
    if spec.kind == "gaussian_position":
        return GaussianPacket(spec.model, p["x0"], p["sigma"], p["p0"], p["t0"])
    if spec.kind == "gaussian_momentum":
        return MomentumPacket(spec.model, p["p0"], p["sigma_p"], p["x0"], p["t0"], int(p["nodes"]))
    return PlaneWave(spec.model, p["p"], p["phase"], p["energy_shift"])


# ---------------------------------------------------------------------------
# Wave-equation residuals

def wave_equation_residual(psi: Wavefunction, t, x, h: float = DEFAULT_FD_STEP):
    """|D psi| with D the model's free operator and derivatives by central differences."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    t, x = _grid(t, x)
    c = psi(t, x)
    tp, tm = psi(t + h, x), psi(t - h, x)
    xp, xm = psi(t, x + h), psi(t, x - h)
    m = psi.model.mass
    d_t = (tp - tm) / (2 * h)
    d_x = (xp - xm) / (2 * h)
    d_tt = (tp - 2 * c + tm) / h ** 2
    d_xx = (xp - 2 * c + xm) / h ** 2
    kind = psi.model.kind
    if kind == SCHRODINGER:
        r = 1j * d_t + d_xx / (2 * m)
    elif kind == KLEIN_GORDON:
        r = d_tt - d_xx + m * m * c
    else:
        r = 1j * (np.einsum("ab,b...->a...", GAMMA0, d_t) + np.einsum("ab,b...->a...", GAMMA1, d_x)) - m * c
    return np.max(np.abs(r), axis=0)


# ---------------------------------------------------------------------------
# Inner products

@dataclass(frozen=True)
class QuadSpec:
    """Uniform trapezoid grid on [x_min, x_max] with n points."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_max > self.x_min or self.n < 3:
            raise ValueError(f"bad quadrature grid {self}")

    def nodes(self):
        x = np.linspace(self.x_min, self.x_max, self.n)
        w = np.full(self.n, x[1] - x[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return x, w


def auto_quad(wavefunctions: Sequence[Wavefunction], t: float, nsig: float = SUPPORT_NSIG,
              points_per_wavelength: float = 4.0, max_points: int = 2_000_001) -> QuadSpec:
    """Grid covering the common support at time t and resolving the combined spectrum."""
    spans = [w.support(t, nsig) for w in wavefunctions]
    spans = [s for s in spans if s is not None]
    if not spans:
        raise ValueError("no wavefunction has bounded support; pass an explicit QuadSpec (finite box)")
    lo, hi = max(s[0] for s in spans), min(s[1] for s in spans)
    if not hi > lo:
        lo, hi = min(s[0] for s in spans), max(s[1] for s in spans)
    kmax = sum(w.max_wavenumber(nsig) for w in wavefunctions)
    h = 2 * np.pi / (points_per_wavelength * max(kmax, 1e-12))
    n = int(np.ceil((hi - lo) / h)) + 1
    n = min(max(n, 257), max_points)
    return QuadSpec(lo, hi, n)


def density_bilinear(model: WaveModel, jf: Jet, ji: Jet) -> np.ndarray:
    """psi_f^* j0-hat psi_i for one pair of jets (complex, grid-shaped)."""
    if model.kind == SCHRODINGER:
        return np.conj(jf.val[0]) * ji.val[0]
    if model.kind == KLEIN_GORDON:
        return (1j / (2 * model.mass)) * (np.conj(jf.val[0]) * ji.dt[0] - np.conj(jf.dt[0]) * ji.val[0])
    return np.sum(np.conj(jf.val) * ji.val, axis=0)


def _check_models(a: Wavefunction, b: Wavefunction):
    if a.model != b.model:
        raise ValueError(f"wavefunctions belong to different models: {a.model} vs {b.model}")


def overlap(psi_f: Wavefunction, psi_i: Wavefunction, t_slice: float = 0.0,
            quad: QuadSpec | None = None, floor: float = OVERLAP_FLOOR) -> complex:
    """<f|i> as the integral of psi_f^* j0-hat psi_i over the slice t = t_slice."""
    _check_models(psi_f, psi_i)
    if quad is None:
        quad = auto_quad([psi_f, psi_i], t_slice)
    x, w = quad.nodes()
    t = np.full_like(x, t_slice)
    val = complex(np.sum(w * density_bilinear(psi_i.model, psi_f.jet(t, x), psi_i.jet(t, x))))
    if abs(val) < floor:
        warnings.warn(f"|<f|i>| = {abs(val):.3e} is below the overlap floor {floor:.1e}",
                      OverlapFloorWarning, stacklevel=2)
    return val


def norm(psi: Wavefunction, t_slice: float = 0.0, quad: QuadSpec | None = None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OverlapFloorWarning)
        return float(np.sqrt(abs(overlap(psi, psi, t_slice, quad).real)))


def slice_independence_check(psi_f: Wavefunction, psi_i: Wavefunction, t1: float, t2: float,
                             quad1: QuadSpec | None = None, quad2: QuadSpec | None = None) -> float:
    return abs(overlap(psi_f, psi_i, t1, quad1) - overlap(psi_f, psi_i, t2, quad2))
