"""Shared model types: meshes, paths, measures, test functions, functionals.

These are the vocabulary types used throughout the laboratory:

* :class:`GridMesh` / :class:`Path` -- uniform time grids on [0, 1] and
  piecewise-linear sample paths over them;
* :class:`FiniteMeasure` -- a finite non-negative measure on [0, 1] given by
  point atoms plus a piecewise-polynomial density, with a JSON round trip;
* :class:`TestFunctionC2c` -- C^2 test functions of compact support in (0, 1)
  with analytic first and second derivatives;
* :class:`ExpFunctional` -- linear combinations of exponential functionals
  ``X -> sum_i c_i exp(-<m_i, X^2>)``;
* :class:`BridgeSpec` -- dimension and boundary data of a Bessel bridge.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridMesh",
    "Path",
    "FiniteMeasure",
    "TestFunctionC2c",
    "bump",
    "poly_bump",
    "ExpFunctional",
    "BridgeSpec",
    "pair_m_x2",
    "pair_m_hx",
    "eval_phi",
    "dir_deriv_phi",
]


@dataclass(frozen=True)
class GridMesh:
    """Uniform mesh 0 = r_0 < ... < r_{n-1} = 1 with n points."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("mesh needs at least two points")

    @property
    def points(self):
        return np.linspace(0.0, 1.0, self.n)

    @property
    def spacing(self):
        return 1.0 / (self.n - 1)


@dataclass
class Path:
    """A sampled path on [0, 1]: times (sorted, spanning [0, 1]) and values.

    Between samples the path is interpreted as piecewise linear.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be matching 1-d arrays")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def value_at(self, t):
        return np.interp(t, self.times, self.values)

    def to_csv(self, path_or_file):
        arr = np.column_stack([self.times, self.values])
        np.savetxt(path_or_file, arr, delimiter=",", header="r,value",
                   comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path_or_file):
        arr = np.loadtxt(path_or_file, delimiter=",", skiprows=1, ndmin=2)
        return cls(arr[:, 0], arr[:, 1])


@dataclass
class FiniteMeasure:
    """Finite non-negative measure on [0, 1]: atoms plus polynomial pieces.

    ``atoms`` is a list of ``(t, weight)`` pairs; ``pieces`` a list of
    ``(lo, hi, coeffs)`` where ``coeffs`` are ascending polynomial
    coefficients of the density in the global variable ``r`` on [lo, hi].
    """

    atoms: list = field(default_factory=list)
    pieces: list = field(default_factory=list)

    def __post_init__(self):
        self.atoms = [(float(t), float(w)) for t, w in self.atoms]
        self.pieces = [(float(lo), float(hi), [float(c) for c in coeffs])
                       for lo, hi, coeffs in self.pieces]
        for t, w in self.atoms:
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"atom location {t} outside [0, 1]")
            if w < 0:
                raise ValueError(f"negative atom weight {w}")
        for lo, hi, coeffs in self.pieces:
            if not (0.0 <= lo < hi <= 1.0):
                raise ValueError(f"bad piece interval [{lo}, {hi}]")
            grid = np.linspace(lo, hi, 33)
            if np.any(np.polynomial.polynomial.polyval(grid, coeffs) < -1e-12):
                raise ValueError("piece density must be non-negative")

    @property
    def is_zero(self):
        return not self.atoms and not self.pieces

    def density_at(self, r):
        """Density part evaluated pointwise (atoms excluded)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        for lo, hi, coeffs in self.pieces:
            mask = (r >= lo) & (r <= hi)
            if np.any(mask):
                out[mask] += np.polynomial.polynomial.polyval(r[mask], coeffs)
        if out.ndim == 0:
            return float(out)
        return out

    def total_mass(self):
        mass = sum(w for _, w in self.atoms)
        for lo, hi, coeffs in self.pieces:
            integ = np.polynomial.polynomial.polyint(coeffs)
            mass += (np.polynomial.polynomial.polyval(hi, integ)
                     - np.polynomial.polynomial.polyval(lo, integ))
        return float(mass)

    def breakpoints(self):
        """Sorted distinct points where the measure is singular or the
        density changes polynomial law, always including 0 and 1."""
        pts = {0.0, 1.0}
        pts.update(t for t, _ in self.atoms)
        for lo, hi, _ in self.pieces:
            pts.add(lo)
            pts.add(hi)
        return sorted(pts)

    def to_json_dict(self):
        return {
            "atoms": [{"t": t, "w": w} for t, w in self.atoms],
            "pieces": [{"lo": lo, "hi": hi, "coeffs": list(coeffs)}
                       for lo, hi, coeffs in self.pieces],
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            atoms=[(a["t"], a["w"]) for a in d.get("atoms", [])],
            pieces=[(p["lo"], p["hi"], p["coeffs"])
                    for p in d.get("pieces", [])],
        )

    def to_json(self, **kwargs):
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json(cls, s):
        return cls.from_json_dict(json.loads(s))

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def atom(cls, t, w):
        return cls(atoms=[(t, w)])

    @classmethod
    def lebesgue(cls, scale=1.0):
        return cls(pieces=[(0.0, 1.0, [scale])])


@dataclass
class TestFunctionC2c:
    """C^2 function with compact support inside (0, 1).

    ``f``, ``d1``, ``d2`` are vectorised evaluators of h, h', h''; the
    support is the open interval (theta, 1 - theta).
    """

    f: object
    d1: object
    d2: object
    theta: float
    label: str = "h"

    def __call__(self, r):
        return self.f(r)

    @property
    def support(self):
        return (self.theta, 1.0 - self.theta)


def bump(theta=0.2):
    """Smooth bump exp(-1/P) with P = (r - theta)(1 - theta - r), peak 1."""
    if not 0.0 < theta < 0.5:
        raise ValueError("theta must lie in (0, 1/2)")
    pc = (0.5 - theta) ** 2
    norm = np.exp(1.0 / pc)

    def _pieces(r):
        r = np.asarray(r, dtype=float)
        p = (r - theta) * (1.0 - theta - r)
        inside = p > 0
        psafe = np.where(inside, p, 1.0)
        h = np.where(inside, norm * np.exp(-1.0 / psafe), 0.0)
        return r, p, inside, psafe, h

    def f(r):
        return _pieces(r)[4]

    def d1(r):
        r, p, inside, psafe, h = _pieces(r)
        dp = 1.0 - 2.0 * r
        return np.where(inside, h * dp / psafe**2, 0.0)

    def d2(r):
        r, p, inside, psafe, h = _pieces(r)
        dp = 1.0 - 2.0 * r
        g1 = dp / psafe**2                       # (-1/P)'
        g2 = -2.0 / psafe**2 - 2.0 * dp**2 / psafe**3   # (-1/P)''
        return np.where(inside, h * (g2 + g1**2), 0.0)

    return TestFunctionC2c(f, d1, d2, theta, label=f"bump({theta:g})")


def poly_bump(theta=0.2):
    """Polynomial bump (r - theta)^3 (1 - theta - r)^3 scaled to peak 1."""
    if not 0.0 < theta < 0.5:
        raise ValueError("theta must lie in (0, 1/2)")
    m = (0.5 - theta) ** 6

    def _uv(r):
        r = np.asarray(r, dtype=float)
        u = r - theta
        v = 1.0 - theta - r
        inside = (u > 0) & (v > 0)
        return u, v, inside

    def f(r):
        u, v, inside = _uv(r)
        return np.where(inside, u**3 * v**3 / m, 0.0)

    def d1(r):
        u, v, inside = _uv(r)
        return np.where(inside, 3.0 * u**2 * v**2 * (v - u) / m, 0.0)

    def d2(r):
        u, v, inside = _uv(r)
        return np.where(inside, 6.0 * u * v * (v**2 - 3.0 * u * v + u**2) / m, 0.0)

    return TestFunctionC2c(f, d1, d2, theta, label=f"poly_bump({theta:g})")


@dataclass
class ExpFunctional:
    """Functional ``Phi(X) = sum_i c_i exp(-<m_i, X^2>)``."""

    terms: list  # list of (coefficient, FiniteMeasure)

    def __post_init__(self):
        self.terms = [(float(c), m) for c, m in self.terms]
        if not self.terms:
            raise ValueError("functional needs at least one term")

    @classmethod
    def one(cls):
        return cls([(1.0, FiniteMeasure.zero())])

    @classmethod
    def single(cls, m, c=1.0):
        return cls([(c, m)])


@dataclass(frozen=True)
class BridgeSpec:
    """A Bessel bridge over [0, 1]: dimension delta, boundary values a, ap."""

    delta: float
    a: float = 0.0
    ap: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("dimension must be positive")
        if self.a < 0 or self.ap < 0:
            raise ValueError("boundary values must be >= 0")


def _trapz_weights(times):
    dt = np.diff(times)
    w = np.zeros(len(times))
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def pair_m_x2(m, path, mesh_warn_tol=1e-12):
    """Pairing ``<m, X^2>`` of a measure with the squared path.

    Atoms are evaluated by interpolation of the path; if an atom does not
    sit on a sample time a warning is emitted (the value is then biased at
    order of the local mesh width).  The density part uses the trapezoidal
    rule on the path's own sample times.
    """
    total = 0.0
    for t, w in m.atoms:
        if np.min(np.abs(path.times - t)) > mesh_warn_tol:
            warnings.warn(
                f"atom at t={t} is not a sample time of the path; "
                "pairing uses linear interpolation", stacklevel=2)
        total += w * float(path.value_at(t)) ** 2
    if m.pieces:
        dens = m.density_at(path.times)
        total += float(np.sum(_trapz_weights(path.times)
                              * dens * path.values**2))
    return total


def pair_m_hx(m, h, path):
    """Pairing ``<m, h X>`` used by directional derivatives of functionals."""
    total = 0.0
    for t, w in m.atoms:
        total += w * float(h(t)) * float(path.value_at(t))
    if m.pieces:
        dens = m.density_at(path.times)
        total += float(np.sum(_trapz_weights(path.times)
                              * dens * h(path.times) * path.values))
    return total


def eval_phi(phi, path):
    """Evaluate ``Phi(X) = sum_i c_i exp(-<m_i, X^2>)`` on a sampled path."""
    return sum(c * np.exp(-pair_m_x2(m, path)) for c, m in phi.terms)


def dir_deriv_phi(phi, path, h):
    """Directional derivative ``d/deps Phi(X + eps h)`` at ``eps = 0``:

        sum_i c_i * (-2 <m_i, h X>) * exp(-<m_i, X^2>).
    """
    return sum(c * (-2.0 * pair_m_hx(m, h, path)) * np.exp(-pair_m_x2(m, path))
               for c, m in phi.terms)
