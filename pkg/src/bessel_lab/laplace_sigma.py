"""Laplace functionals of (squared) Bessel processes and bridges.

For a finite measure ``m`` with transform ``phi`` (see
:mod:`.sturm_liouville`) and time change ``rho``, the conditional Laplace
functional of ``Phi(X) = exp(-<m, X^2>)`` given the value at time ``r`` is
expressed through the regularised squared-Bessel kernel ``q_reg``:

unconditioned start ``a``:

    Sigma_a(Phi | b) = 2 K(a, m) phi_r^{-delta}
                       q_reg(delta, rho_r, a^2, b^2/phi_r^2),

    K(a, m) = exp(a^2 phi'(0)/2) phi(1)^{delta/2};

bridge ``a -> ap`` over [0, 1]:

    Sigma_{a,ap}(Phi | b) = 2 exp(a^2 phi'(0)/2) phi_1^{-delta/2} phi_r^{-delta}
        q_reg(delta, rho_r,          a^2,          b^2/phi_r^2)
      * q_reg(delta, rho_1 - rho_r,  b^2/phi_r^2,  ap^2/phi_1^2)
      / q_reg(delta, 1,              a^2,          ap^2).

Both expressions are smooth functions of ``s = b^2`` down to (and slightly
past) ``s = 0``, which is what the finite-part machinery differentiates.

The module also provides the mean ``zeta(t) = E[X_t]`` of the Bessel process
started at ``a`` and its second time-derivative, computed either by
Richardson-extrapolated finite differences or through a finite-part pairing
of the regularised kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .core import BridgeSpec, FiniteMeasure
from .mu_dist import SmoothTestFn, mu_pair
from .quadrature import adaptive_gl, decay_cutoff
from .specfun import besq_density_reg, besq_density_reg_ytaylor
from .sturm_liouville import solve_sl

__all__ = [
    "SigmaContext",
    "sigma_uncond",
    "sigma_bridge",
    "sigma_value_at_zero",
    "sigma_ds_at_zero",
    "zeta",
    "zeta_second_deriv",
]

#: Step sizes (in s = b^2) for the Richardson derivative at the origin.
_DS_STEPS = (1e-3, 5e-4, 2.5e-4)


@dataclass
class SigmaContext:
    """A bridge/process specification paired with one measure's transform."""

    spec: BridgeSpec
    m: FiniteMeasure
    sol: object = None

    def __post_init__(self):
        if self.sol is None:
            self.sol = solve_sl(self.m)

    @property
    def K(self):
        """Normalisation ``exp(a^2 phi'(0)/2) phi(1)^{delta/2}`` (1 for m = 0)."""
        s = self.sol
        return math.exp(self.spec.a**2 * s.phi_prime0 / 2.0) \
            * s.phi1 ** (self.spec.delta / 2.0)


def _reg_from(delta, t, x, y):
    """Regularised kernel with the (possibly slightly negative) extension
    argument in the first space slot.  The regularised kernel is symmetric
    in its two space arguments, so swap them to reuse the y-extension."""
    return besq_density_reg(delta, t, y, x)


def _sigma_uncond_s(ctx, r, s):
    """Unconditioned Sigma as a function of s = b^2 (s may be slightly < 0)."""
    d, a = ctx.spec.delta, ctx.spec.a
    phr = float(ctx.sol.phi(r))
    rr = float(ctx.sol.rho(r))
    z = np.asarray(s, dtype=float) / phr**2
    return 2.0 * ctx.K * phr ** (-d) * besq_density_reg(d, rr, a**2, z)


def _sigma_bridge_s(ctx, r, s):
    """Bridge Sigma as a function of s = b^2 (s may be slightly < 0)."""
    d, a, ap = ctx.spec.delta, ctx.spec.a, ctx.spec.ap
    sol = ctx.sol
    phr = float(sol.phi(r))
    rr = float(sol.rho(r))
    r1 = sol.rho1
    ph1 = sol.phi1
    z = np.asarray(s, dtype=float) / phr**2
    pref = (2.0 * math.exp(a**2 * sol.phi_prime0 / 2.0)
            * ph1 ** (-d / 2.0) * phr ** (-d))
    num = (besq_density_reg(d, rr, a**2, z)
           * _reg_from(d, r1 - rr, z, ap**2 / ph1**2))
    den = besq_density_reg(d, 1.0, a**2, ap**2)
    return pref * num / den


def sigma_uncond(ctx, r, b):
    """``Sigma_a(exp(-<m, X^2>) | X_r = b)`` for the unconditioned process."""
    b = np.asarray(b, dtype=float)
    return _sigma_uncond_s(ctx, r, b**2)


def sigma_bridge(ctx, r, b):
    """``Sigma_{a,ap}(exp(-<m, X^2>) | X_r = b)`` for the bridge."""
    b = np.asarray(b, dtype=float)
    return _sigma_bridge_s(ctx, r, b**2)


def _sigma_s(ctx, r, s, bridge):
    return _sigma_bridge_s(ctx, r, s) if bridge else _sigma_uncond_s(ctx, r, s)


def sigma_value_at_zero(ctx, r, bridge=True):
    """``Sigma(Phi | 0)``, the value at ``b = 0``."""
    return float(_sigma_s(ctx, r, 0.0, bridge))


def sigma_ds_at_zero(ctx, r, bridge=True):
    """``d/ds Sigma(Phi | sqrt(s))`` at ``s = 0``.

    Central differences in ``s`` (the kernel extends analytically to small
    negative ``s``) with Richardson extrapolation over the three stock steps.
    """
    ests = []
    for h in _DS_STEPS:
        up = float(_sigma_s(ctx, r, +h, bridge))
        dn = float(_sigma_s(ctx, r, -h, bridge))
        ests.append((up - dn) / (2.0 * h))
    # steps halve: two Richardson levels for the O(h^2) central difference
    r1 = [(4.0 * ests[i + 1] - ests[i]) / 3.0 for i in range(2)]
    return (16.0 * r1[1] - r1[0]) / 15.0


# ---------------------------------------------------------------------------
# Mean of the Bessel process and its second time-derivative.
# ---------------------------------------------------------------------------

def zeta(delta, a, t, rtol=1e-12):
    """``E[X_t]`` for the Bessel process of dimension delta started at a.

    Closed form for ``a = 0``; otherwise quadrature of the transition
    density.
    """
    if a == 0.0:
        return (math.sqrt(2.0 * t) * special.gamma((delta + 1.0) / 2.0)
                / special.gamma(delta / 2.0))

    # E[sqrt(X_t)] = int_0^inf y^{(delta-1)/2} q_reg(delta, t, a^2, y) dy;
    # the algebraic endpoint weight is handled by QUADPACK's QAWS rule.
    def smooth(y):
        return float(besq_density_reg(delta, t, a**2, float(y)))

    hi = (a + 14.0 * math.sqrt(t) + 6.0 * t) ** 2

    def probe(y):
        return np.asarray(y, float) ** ((delta - 1.0) / 2.0) \
            * besq_density_reg(delta, t, a**2, np.asarray(y, float))

    hi = decay_cutoff(probe, 1e-3 * hi, hi)
    val, err = integrate.quad(smooth, 0.0, hi, weight="alg",
                              wvar=((delta - 1.0) / 2.0, 0.0),
                              epsabs=1e-13, epsrel=rtol, limit=400)
    return val


def _zeta_second_deriv_fd(delta, a, t):
    """Richardson-extrapolated central second difference of zeta in t."""
    h0 = 0.1 * t
    ests = []
    for lvl in range(3):
        h = h0 / 2**lvl
        ests.append((zeta(delta, a, t + h) - 2.0 * zeta(delta, a, t)
                     + zeta(delta, a, t - h)) / h**2)
    r1 = [(4.0 * ests[i + 1] - ests[i]) / 3.0 for i in range(2)]
    return (16.0 * r1[1] - r1[0]) / 15.0


def _zeta_second_deriv_fp(delta, a, t):
    """Finite-part route:

        zeta''(t) = -Gamma((delta+1)/2) <mu_{(delta-3)/2}(y), q_reg(delta, t, a^2, y)>.
    """
    coeffs = besq_density_reg_ytaylor(delta, t, a**2, 8)
    derivs = coeffs * special.factorial(np.arange(9))
    fn = SmoothTestFn(
        [lambda y: besq_density_reg(delta, t, a**2, np.asarray(y, dtype=float))],
        derivs_at_zero=derivs,
        label="q_reg",
    )
    alpha = (delta - 3.0) / 2.0
    return -special.gamma((delta + 1.0) / 2.0) * mu_pair(alpha, fn)


def zeta_second_deriv(delta, a, t, route="finite-part"):
    """Second time-derivative of the Bessel mean, by the requested route
    (``"finite-part"`` or ``"finite-difference"``)."""
    if route == "finite-part":
        return _zeta_second_deriv_fp(delta, a, t)
    if route == "finite-difference":
        return _zeta_second_deriv_fd(delta, a, t)
    raise ValueError(f"unknown route {route!r}")
