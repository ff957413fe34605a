"""Transition densities of Bessel and squared Bessel processes.

The central object is the *regularised* squared-Bessel transition kernel

    besq_density_reg(delta, t, x, y) = q_t^delta(x, y) / y**(delta/2 - 1),

which extends to an entire function of both space arguments.  Writing
``nu = delta/2 - 1`` and ``w = x*y / (4*t**2)`` one has

    q_t(x, y) / y**nu = (2*t)**(-delta/2) * exp(-(x+y)/(2*t)) * S_nu(w),
    S_nu(w) = sum_k w**k / (k! * Gamma(k + nu + 1)),

and ``S_nu`` is entire, so the regularised kernel is well defined for
``x = 0``, ``y = 0`` and even (slightly) negative ``y`` -- which is what the
Laplace-functional machinery needs when differentiating at the origin.  For
large ``w`` the series is traded for the scaled modified Bessel function
``ive`` via ``S_nu(w) = w**(-nu/2) * I_nu(2*sqrt(w))``, in which case the
Gaussian factor combines into ``exp(-(sqrt(x)-sqrt(y))**2/(2*t))``.

All functions are vectorised over their space arguments.
"""

from __future__ import annotations

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "bessel_i_scaled",
    "besq_density_reg",
    "besq_density_reg_ytaylor",
    "q_delta_t",
    "p_delta_t",
    "bridge_density_sq",
    "bridge_density",
]

# Below this value of w = x*y/(4 t^2) the power series for S_nu is used;
# above it the scaled-Bessel route.  The series is a sum of positive terms
# (for w > 0) so there is no cancellation; 80 terms reach machine precision
# for w <= _SERIES_W_MAX.
_SERIES_W_MAX = 25.0
_SERIES_MAX_TERMS = 90


class DomainError(ValueError):
    """Raised when a special-function argument is outside its domain."""


def bessel_i_scaled(nu, z):
    """Exponentially scaled modified Bessel function ``exp(-z) * I_nu(z)``.

    Parameters
    ----------
    nu : float
        Order; must satisfy ``nu > -1``.
    z : array_like
        Non-negative argument.
    """
    if nu <= -1.0:
        raise DomainError(f"order must satisfy nu > -1, got {nu}")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("argument of bessel_i_scaled must be >= 0")
    return special.ive(nu, z)


def _series_S(nu, w):
    """Entire function S_nu(w) = sum_k w^k / (k! Gamma(k+nu+1)) by its series.

    Accurate for |w| <= _SERIES_W_MAX; supports negative w.
    """
    w = np.asarray(w, dtype=float)
    term = np.full(w.shape, special.rgamma(nu + 1.0))
    total = term.copy()
    scale = float(np.max(np.abs(total))) if total.size else 1.0
    scale = max(scale, 1e-300)
    for k in range(1, _SERIES_MAX_TERMS):
        term = term * (w / (k * (k + nu)))
        total += term
        m = float(np.max(np.abs(term))) if term.size else 0.0
        if m <= 1e-18 * scale:
            break
        scale = max(scale, float(np.max(np.abs(total))))
    return total


def _check_qt_args(delta, t):
    if not delta > 0:
        raise DomainError(f"dimension must be positive, got delta={delta}")
    if not t > 0:
        raise DomainError(f"time must be positive, got t={t}")


def besq_density_reg(delta, t, x, y):
    """Regularised squared-Bessel kernel ``q_t^delta(x, y) / y**(delta/2-1)``.

    Entire in both ``x`` and ``y``; ``y`` may be slightly negative (the series
    branch is used whenever ``x*y/(4 t^2) < 25`` or ``x*y < 0``).
    """
    _check_qt_args(delta, t)
    nu = 0.5 * delta - 1.0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0):
        raise DomainError("start point x must be >= 0")
    x, y = np.broadcast_arrays(x, y)
    w = x * y / (4.0 * t * t)
    out = np.empty(w.shape, dtype=float)

    small = w < _SERIES_W_MAX  # includes all negative w
    if np.any(small):
        xs, ys, ws = x[small], y[small], w[small]
        pref = (2.0 * t) ** (-0.5 * delta) * np.exp(-(xs + ys) / (2.0 * t))
        out[small] = pref * _series_S(nu, ws)
    big = ~small
    if np.any(big):
        xb, yb = x[big], y[big]
        sx, sy = np.sqrt(xb), np.sqrt(yb)
        arg = sx * sy / t
        out[big] = (
            np.exp(-((sx - sy) ** 2) / (2.0 * t))
            * (xb * yb) ** (-0.5 * nu)
            * special.ive(nu, arg)
            / (2.0 * t)
        )
    if out.ndim == 0:
        return float(out)
    return out


def besq_density_reg_ytaylor(delta, t, x, order):
    """Taylor coefficients in ``y`` at 0 of ``y -> besq_density_reg(delta,t,x,y)``.

    Returns ``c[0..order]`` with ``besq_density_reg = sum_j c[j] * y**j + O(y^{order+1})``.
    """
    _check_qt_args(delta, t)
    if x < 0:
        raise DomainError("start point x must be >= 0")
    nu = 0.5 * delta - 1.0
    c = x / (4.0 * t * t)
    # S_nu(c*y) has y-coefficients  c^l / (l! Gamma(l+nu+1));
    # exp(-y/(2t)) has coefficients (-1/(2t))^i / i!.  Convolve.
    s_coef = [c**l / special.gamma(l + 1.0) * special.rgamma(l + nu + 1.0)
              for l in range(order + 1)]
    e_coef = [(-1.0 / (2.0 * t)) ** i / special.gamma(i + 1.0)
              for i in range(order + 1)]
    pref = (2.0 * t) ** (-0.5 * delta) * np.exp(-x / (2.0 * t))
    out = []
    for j in range(order + 1):
        out.append(pref * sum(e_coef[i] * s_coef[j - i] for i in range(j + 1)))
    return np.array(out)


def q_delta_t(delta, t, x, y):
    """Squared-Bessel transition density ``q_t^delta(x, y)`` (density in y).

    For ``x = 0`` this is ``(2t)^{-delta/2} Gamma(delta/2)^{-1} y^{delta/2-1}
    e^{-y/2t}``; for ``x > 0`` the usual Bessel-function form.  Diverges at
    ``y = 0`` when ``delta < 2`` (the regularised kernel stays finite).
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("end point y must be >= 0")
    with np.errstate(divide="ignore"):
        pw = np.where(y > 0, y, 1.0) ** (0.5 * delta - 1.0)
        pw = np.where(y > 0, pw,
                      np.inf if delta < 2 else (1.0 if delta == 2 else 0.0))
    return pw * besq_density_reg(delta, t, x, y)


def p_delta_t(delta, t, a, b):
    """Bessel transition density ``p_t^delta(a, b) = 2 b q_t^delta(a^2, b^2)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("Bessel arguments must be >= 0")
    return 2.0 * b ** (delta - 1.0) * besq_density_reg(delta, t, a**2, b**2)


def bridge_density_sq(delta, t, x, y, z):
    """Marginal density at time ``t`` of the squared-Bessel bridge ``x -> y``
    over [0, 1], evaluated at ``z``:

        q_t(x, z) q_{1-t}(z, y) / q_1(x, y).

    Valid for all boundary data including ``x = 0`` and/or ``y = 0``.
    """
    if not 0 < t < 1:
        raise DomainError("bridge time must lie in (0, 1)")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("evaluation point z must be >= 0")
    num = besq_density_reg(delta, t, x, z) * besq_density_reg(delta, 1.0 - t, z, y)
    den = besq_density_reg(delta, 1.0, x, y)
    with np.errstate(divide="ignore"):
        pw = np.where(z > 0, z, 1.0) ** (0.5 * delta - 1.0)
        pw = np.where(z > 0, pw,
                      np.inf if delta < 2 else (1.0 if delta == 2 else 0.0))
    return pw * num / den


def bridge_density(delta, r, a, ap, b):
    """Marginal density at time ``r`` of the Bessel bridge ``a -> ap`` over
    [0, 1], evaluated at ``b``.  Boundary values may be zero."""
    if not 0 < r < 1:
        raise DomainError("bridge time must lie in (0, 1)")
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise DomainError("evaluation point b must be >= 0")
    num = (besq_density_reg(delta, r, a**2, b**2)
           * besq_density_reg(delta, 1.0 - r, b**2, ap**2))
    den = besq_density_reg(delta, 1.0, a**2, ap**2)
    return 2.0 * b ** (delta - 1.0) * num / den
