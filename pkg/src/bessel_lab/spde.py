"""Weak delta = 2 dynamics: 2-component stochastic heat equation diagnostics.

The 2-dimensional Bessel-bridge field is realised as ``u = |v|`` where
``v = (v1, v2)`` solves two independent linear stochastic heat equations on
(0, 1) with Dirichlet boundary conditions, simulated spectrally in the sine
basis ``e_k(x) = sqrt(2) sin(k pi x)`` with rates ``lambda_k = k^2 pi^2``.
Each mode is an Ornstein-Uhlenbeck process advanced by its exact exponential
integrator, so the stationary law (per-mode variance ``1/lambda_k``) is
preserved without discretisation bias.

The weak-dynamics decomposition under test is

    <u_t, h> - <u_0, h> = M_t + (1/2) int_0^t <h'', u_s> ds - N_t,
    N_t = -(1/2) int_0^t <f_eps_eta(u_s), h> ds      (sign folded into f),

with ``f_eps_eta(x) = (1/4)(1_{x >= eps}/x^3 - (2/eps) rho_eta(x)/x)`` and
``rho_eta`` a smooth even mollifier.  If the decomposition holds, ``M`` is a
martingale with quadratic variation ``|h|_{L2}^2 t``; the diagnostics
estimate the bracket ratio, run a martingale-increment regression, and check
the stationary marginals against the 2-dimensional Bessel bridge density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import adaptive_gl

__all__ = [
    "SpectralField",
    "Mollifier",
    "covariance_q",
    "ou_step",
    "field_to_u",
    "f_eps_eta",
    "run_decomposition",
    "gamma_rs",
    "stationary_field",
]

#: Default spatial synthesis mesh size.
SYNTH_MESH = 257


def _lambdas(k_max):
    k = np.arange(1, k_max + 1)
    return (k * math.pi) ** 2


def _basis(x, k_max):
    """e_k(x) = sqrt(2) sin(k pi x); returns shape (len(x), K)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(1, k_max + 1)
    return math.sqrt(2.0) * np.sin(math.pi * np.outer(x, k))


@dataclass
class SpectralField:
    """Two-component field in the sine basis: coefficients (..., 2, K)."""

    coefficients: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape[-2] != 2:
            raise ValueError("field must have exactly two components")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("non-finite field coefficients")

    @property
    def k_max(self):
        return self.coefficients.shape[-1]


def stationary_field(k_max, rng, replicas=None):
    """Draw from the exact stationary law: per mode N(0, 1/lambda_k)."""
    lam = _lambdas(k_max)
    shape = (2, k_max) if replicas is None else (replicas, 2, k_max)
    coef = rng.generator.standard_normal(shape) / np.sqrt(lam)
    return SpectralField(coef)


def covariance_q(t, x, xp, k_max):
    """Covariance of the linear field:

        q_t(x, x') = sum_k (1 - e^{-lambda_k t}) / lambda_k e_k(x) e_k(x')

    with ``t = inf`` giving the stationary kernel (= x ^ x' - x x' as
    k_max -> inf).  Returns (value, truncation_bound).
    """
    if k_max < 16:
        raise ValueError("need at least 16 modes")
    lam = _lambdas(k_max)
    ex = _basis(x, k_max)[0]
    exp_ = _basis(xp, k_max)[0]
    if t == math.inf:
        fac = 1.0 / lam
    else:
        if t < 0:
            raise ValueError("time must be >= 0")
        fac = -np.expm1(-lam * t) / lam
    val = float(np.sum(fac * ex * exp_))
    # |e_k| <= sqrt(2): tail bounded by 2 sum_{k>K} 1/(k pi)^2 <= 2/(pi^2 K)
    bound = 2.0 / (math.pi**2 * k_max)
    return val, bound


def ou_step(fld, dt, rng):
    """Exact Ornstein-Uhlenbeck update of every mode over a step ``dt``:

        c <- e^{-lambda_k dt / 2} c + N(0, (1 - e^{-lambda_k dt}) / lambda_k).
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    lam = _lambdas(fld.k_max)
    decay = np.exp(-0.5 * lam * dt)
    std = np.sqrt(-np.expm1(-lam * dt) / lam)
    noise = rng.generator.standard_normal(fld.coefficients.shape)
    return SpectralField(fld.coefficients * decay + std * noise,
                        time=fld.time + dt)


def field_to_u(fld, mesh_x):
    """``u(x) = |v(x)|`` by truncated sine synthesis at the given points."""
    basis = _basis(mesh_x, fld.k_max)  # (n, K)
    v = fld.coefficients @ basis.T     # (..., 2, n)
    return np.sqrt(np.sum(v**2, axis=-2))


class Mollifier:
    """Smooth even bump ``rho(y) = C exp(-1/(1-y^2))`` on (-1, 1), mass 1;
    ``rho_eta(y) = rho(y/eta)/eta``."""

    def __init__(self, eta):
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.eta = float(eta)
        self._norm = 1.0 / adaptive_gl(self._raw, -1.0, 1.0, rtol=1e-13,
                                       atol=1e-16)

    @staticmethod
    def _raw(y):
        y = np.asarray(y, dtype=float)
        inside = np.abs(y) < 1.0
        ys = np.where(inside, y, 0.0)
        return np.where(inside, np.exp(-1.0 / (1.0 - ys * ys)), 0.0)

    def profile(self, y):
        """The unit-width profile rho(y)."""
        return self._norm * self._raw(y)

    def __call__(self, y):
        """The scaled mollifier rho_eta(y)."""
        return self.profile(np.asarray(y, dtype=float) / self.eta) / self.eta

    def half_mass(self):
        """int_0^eta rho_eta = 1/2 by symmetry (verified by quadrature)."""
        return adaptive_gl(self, 0.0, self.eta, rtol=1e-13, atol=1e-16)


def f_eps_eta(x, eps, eta, mollifier=None):
    """``(1/4)(1_{x >= eps}/x^3 - (2/eps) rho_eta(x)/x)``; vanishes on
    (eta, eps).  The value at x = 0 is taken as 0 (the field is almost
    surely positive at interior points at any fixed time; the convention is
    never exercised by the time integrals)."""
    if eta >= eps:
        raise ValueError("need eta < eps")
    if mollifier is None:
        mollifier = Mollifier(eta)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("f_eps_eta is defined on x >= 0")
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    val = np.where(x >= eps, 0.25 / xs**3, 0.0)
    val = val - np.where(pos, 0.5 / eps * mollifier(xs) / xs, 0.0)
    if val.ndim == 0:
        return float(val)
    return val


def _trapz_weights(x):
    w = np.zeros(len(x))
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


@dataclass
class DecompositionSeries:
    """Per-replica time series of the weak-dynamics decomposition."""

    times: np.ndarray
    uh: np.ndarray      # (replicas, n_times) <u_t, h>
    lap: np.ndarray     # (1/2) int_0^t <h'', u_s> ds, left-point rule
    n_drift: np.ndarray  # N^{eps,eta}_t, left-point rule
    mart: np.ndarray    # M_t = uh - uh_0 - lap + N


def run_decomposition(h, eps, eta, t_final, dt, k_max, rng, replicas=1,
                      mesh_n=SYNTH_MESH, store_every=1):
    """Simulate the stationary field and accumulate the decomposition.

    ``h`` is a :class:`~.core.TestFunctionC2c`.  All replicas advance in one
    vectorised sweep.  Time integrals use the left-point (adapted) rule.
    Returns a :class:`DecompositionSeries` with snapshots every
    ``store_every`` steps (plus the final time).
    """
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-12 * max(t_final, 1.0):
        raise ValueError("t_final must be an integer multiple of dt")
    x = np.linspace(0.0, 1.0, mesh_n)
    wq = _trapz_weights(x)
    hv = np.asarray(h(x), dtype=float) * wq
    h2v = np.asarray(h.d2(x), dtype=float) * wq
    moll = Mollifier(eta)

    fld = stationary_field(k_max, rng, replicas=replicas)
    u = field_to_u(fld, x)  # (replicas, n)
    uh0 = u @ hv

    keep = list(range(0, n_steps + 1, store_every))
    if keep[-1] != n_steps:
        keep.append(n_steps)
    times = np.array([i * dt for i in keep])
    uh_out = np.empty((replicas, len(keep)))
    lap_out = np.empty_like(uh_out)
    n_out = np.empty_like(uh_out)

    lap_acc = np.zeros(replicas)
    n_acc = np.zeros(replicas)
    col = 0
    for i in range(n_steps + 1):
        if i == keep[col]:
            uh_out[:, col] = u @ hv
            lap_out[:, col] = lap_acc
            n_out[:, col] = n_acc
            col += 1
            if col == len(keep):
                break
        # left-point increments over [i dt, (i+1) dt)
        lap_acc = lap_acc + 0.5 * dt * (u @ h2v)
        n_acc = n_acc + 0.5 * dt * (f_eps_eta(u, eps, eta, moll) @ hv)
        fld = ou_step(fld, dt, rng)
        u = field_to_u(fld, x)

    mart = uh_out - uh0[:, None] - lap_out + n_out
    return DecompositionSeries(times=times, uh=uh_out, lap=lap_out,
                               n_drift=n_out, mart=mart)


def h_l2_norm_sq(h, rtol=1e-12):
    """``int h(r)^2 dr`` over the support of ``h``."""
    lo, hi = h.support
    return adaptive_gl(lambda r: np.asarray(h(r))**2, lo, hi, rtol=rtol)


def bracket_ratio(series, h):
    """``E[M_T^2] / (|h|^2 T)`` with a jackknife standard error."""
    m = series.mart[:, -1]
    t_final = series.times[-1]
    denom = h_l2_norm_sq(h) * t_final
    ratio = float(np.mean(m**2)) / denom
    se = float(np.std(m**2, ddof=1) / math.sqrt(len(m))) / denom
    return ratio, se


def martingale_regression(series):
    """Regress M-increments on the adapted state (<u_t,h>, N_t, M_t).

    Returns (coefficients, stderrs): each coefficient should vanish for a
    martingale.  Pools all replicas and snapshot increments.
    """
    dm = np.diff(series.mart, axis=1).ravel()
    z1 = series.uh[:, :-1].ravel()
    z2 = series.n_drift[:, :-1].ravel()
    z3 = series.mart[:, :-1].ravel()
    design = np.column_stack([np.ones_like(z1), z1, z2, z3])
    coef, *_ = np.linalg.lstsq(design, dm, rcond=None)
    resid = dm - design @ coef
    dof = max(len(dm) - design.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return coef, np.sqrt(np.diag(cov))


def gamma_rs(r, s, t, theta, k_max):
    """Covariance matrix of ``(v(r), v(s))`` per component at lag ``t``:

        M = [[q_inf(r, r), q^t(r, s)], [q^t(r, s), q_inf(s, s)]],
        q^t = q_inf - q_t,

    with its determinant and the lower bound ``theta^2 |r - s|``.
    Returns (matrix, det, bound, slack) where slack is the truncation bound.
    """
    if not (theta <= r <= 1.0 - theta and theta <= s <= 1.0 - theta):
        raise ValueError("r, s must lie in [theta, 1 - theta]")
    qr, b1 = covariance_q(math.inf, r, r, k_max)
    qs, b2 = covariance_q(math.inf, s, s, k_max)
    qt_rs, b3 = covariance_q(t, r, s, k_max)
    qinf_rs, b4 = covariance_q(math.inf, r, s, k_max)
    off = qinf_rs - qt_rs
    mat = np.array([[qr, off], [off, qs]])
    det = float(np.linalg.det(mat))
    bound = theta**2 * abs(r - s)
    slack = b1 + b2 + b3 + b4
    return mat, det, bound, slack
