"""Shared test helpers: marginal CDF oracles and the standard case battery."""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import cumulative_trapezoid

from bessel_lab.core import (BridgeSpec, ExpFunctional, FiniteMeasure, bump)
from bessel_lab.ibpf import IbpfCase
from bessel_lab.specfun import besq_density_reg


def bridge_marginal_cdf(delta, r, a, ap, bmax=None, n=4001):
    """CDF of the Bessel bridge marginal at time r, as a callable.

    Integrates the density in the variable g = b**delta, in which the
    integrand is bounded at the origin even for delta < 1 (where the density
    itself diverges like b**(delta-1)).
    """
    if bmax is None:
        # centre + 8 bridge standard deviations keeps the g-grid resolved
        # even when the marginal is concentrated (small r(1-r), larger delta)
        bmax = (a * (1.0 - r) + ap * r
                + 8.0 * math.sqrt(delta * r * (1.0 - r)))
    g = np.linspace(0.0, bmax**delta, n)
    b = g ** (1.0 / delta)
    q = (besq_density_reg(delta, r, a**2, b**2)
         * besq_density_reg(delta, 1.0 - r, b**2, ap**2)
         / besq_density_reg(delta, 1.0, a**2, ap**2))
    integrand = (2.0 / delta) * q
    cdf = cumulative_trapezoid(integrand, g, initial=0.0)
    cdf /= cdf[-1]

    def cdf_fn(x):
        x = np.asarray(x, dtype=float)
        return np.interp(np.clip(x, 0.0, None) ** delta, g, cdf)

    return cdf_fn


def measure_battery():
    """The three measures of the standard verification battery."""
    return [
        ("m0", FiniteMeasure.zero()),
        ("atom", FiniteMeasure.atom(0.6, 1.0)),
        ("leb", FiniteMeasure.lebesgue(0.5)),
    ]


def standard_battery():
    """All 63 bridge-mode cases of acceptance criterion 1."""
    h = bump(0.2)
    cases = []
    for delta in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5):
        for a, ap in ((0.0, 0.0), (1.0, 0.0), (1.0, 2.0)):
            for tag, m in measure_battery():
                phi = (ExpFunctional.one() if m.is_zero
                       else ExpFunctional.single(m))
                cases.append(IbpfCase(
                    BridgeSpec(delta, a, ap), phi, h, mode="bridge",
                    tol=1e-5,
                    case_id=f"d{delta:g}_a{a:g}_ap{ap:g}_{tag}"))
    return cases
