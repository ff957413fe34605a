"""Integration-by-parts formulae (IbPFs) for Bessel bridges and processes.

For a bridge of dimension ``delta`` from ``a`` to ``ap`` (or the
unconditioned process started at ``a``), a functional
``Phi(X) = sum_i c_i exp(-<m_i, X^2>)`` and a test function ``h`` with
compact support in (0, 1), both sides of the identity

    E[d_h Phi] + E[<h'', X> Phi]  =  RHS(delta)

are evaluated by independent numerical routes:

* the left-hand side analytically, through the conditional Laplace
  functional ``Sigma`` (bridge) or the process mean ``zeta`` (unconditioned),
  and by Monte Carlo over exactly sampled paths;
* the right-hand side by the dimension-dependent formula

    generic delta (not 1 or 3):
        -kappa(delta) int_0^1 h_r int_0^inf b^{delta-4}
                        [T^{2k}_b Sigma(Phi | .)] db dr,
        kappa = (delta-3)(delta-1)/4,   k = floor((3-delta)/2),
    delta = 3:   -(1/2) int h_r Sigma(Phi | 0) dr,
    delta = 1:   +(1/4) int h_r (d^2/db^2 Sigma)(Phi | 0) dr,

  and by the unified finite-part form

        -Gamma(delta)/(4(delta-2)) int h_r <mu_{delta-3}, Sigma(Phi | .)> dr

  (disabled in a small guard band around delta = 2, where the prefactor
  pole is only removable analytically).

The delicate object is the inner b-integral: after the Taylor subtraction
the integrand vanishes to high order at 0 and direct evaluation loses all
precision there.  Working in ``s = b^2``, the integral splits into

* [0, s0]: closed form from the exact Taylor coefficients of Sigma in s
  (obtained by convolving the y-Taylor series of the two regularised
  kernels -- no numerical differentiation);
* [s0, S]: direct adaptive quadrature (subtraction is benign there);
* [S, inf): Sigma itself is negligible; the power tails of the subtracted
  monomials are added in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .core import BridgeSpec, ExpFunctional, TestFunctionC2c
from .laplace_sigma import SigmaContext, zeta_second_deriv
from .mu_dist import SmoothTestFn, mu_pair
from .quadrature import adaptive_gl, decay_cutoff, fixed_gl
from .samplers import bessel_bridge_general, mc_estimate
from .specfun import besq_density_reg_ytaylor, p_delta_t

__all__ = [
    "IbpfCase",
    "VerifyReport",
    "rel_err",
    "sigma_s_series",
    "lhs_uncond_analytic",
    "lhs_bridge_analytic",
    "lhs_mc",
    "rhs_ibpf",
    "gamma_3",
    "verify",
]

#: Number of s-Taylor coefficients of Sigma carried by the series pieces.
_SERIES_ORDER = 14

#: Guard band around delta = 2 inside which the unified evaluator refuses
#: to run (the 1/(delta-2) pole is only removable analytically).
_DELTA2_GUARD = 1e-6

#: Guard band for detecting the special dimensions 1 and 3.
_INT_GUARD = 1e-12


@dataclass
class IbpfCase:
    """One verification case: bridge/process law, functional, test function."""

    spec: BridgeSpec
    phi: ExpFunctional
    h: TestFunctionC2c
    mode: str = "bridge"  # "bridge" | "unconstrained"
    tol: float = 1e-5
    case_id: str = ""

    def __post_init__(self):
        if self.mode not in ("bridge", "unconstrained"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.case_id:
            s = self.spec
            self.case_id = (f"d{s.delta:g}_a{s.a:g}_ap{s.ap:g}_{self.mode}"
                            f"_{self.h.label}")


@dataclass
class VerifyReport:
    """Outcome of one case: both sides, errors, pass flags."""

    case_id: str
    lhs_analytic: float
    rhs: float
    abs_err: float
    rel_err: float
    passed: bool
    lhs_mc: float = None
    stderr: float = None
    mc_passed: bool = None
    elapsed_s: float = 0.0

    def to_json_dict(self):
        return {
            "case_id": self.case_id,
            "lhs_analytic": self.lhs_analytic,
            "lhs_mc": self.lhs_mc,
            "stderr": self.stderr,
            "rhs": self.rhs,
            "abs_err": self.abs_err,
            "rel_err": self.rel_err,
            "pass": bool(self.passed) and (self.mc_passed is not False),
        }


def rel_err(lhs, rhs):
    """Symmetric relative error |lhs-rhs| / (|lhs| + |rhs| + 1e-300)."""
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)


# ---------------------------------------------------------------------------
# Exact Taylor data of Sigma in s = b^2 at the origin.
# ---------------------------------------------------------------------------

def sigma_s_series(ctx, r, bridge=True, order=_SERIES_ORDER):
    """Taylor coefficients ``c_j`` of ``s -> Sigma(Phi | sqrt(s))`` at 0.

    Exact (up to rounding): obtained from the y-Taylor series of the
    regularised squared Bessel kernel, convolved for the bridge where Sigma
    is a product of two kernels in the same variable.
    """
    d, a, ap = ctx.spec.delta, ctx.spec.a, ctx.spec.ap
    sol = ctx.sol
    phr = float(sol.phi(r))
    rr = float(sol.rho(r))
    if bridge:
        r1, ph1 = sol.rho1, sol.phi1
        av = besq_density_reg_ytaylor(d, rr, a**2, order)
        bv = besq_density_reg_ytaylor(d, r1 - rr, (ap / ph1) ** 2, order)
        conv = np.convolve(av, bv)[: order + 1]
        from .specfun import besq_density_reg
        den = besq_density_reg(d, 1.0, a**2, ap**2)
        pref = (2.0 * math.exp(a**2 * sol.phi_prime0 / 2.0)
                * ph1 ** (-d / 2.0) * phr ** (-d)) / den
        coeffs = pref * conv
    else:
        av = besq_density_reg_ytaylor(d, rr, a**2, order)
        coeffs = 2.0 * ctx.K * phr ** (-d) * av
    # account for z = s / phr^2
    return coeffs * phr ** (-2.0 * np.arange(order + 1))


def _sigma_of_s(ctx, r, s, bridge):
    from .laplace_sigma import _sigma_bridge_s, _sigma_uncond_s
    return _sigma_bridge_s(ctx, r, s) if bridge else _sigma_uncond_s(ctx, r, s)


def _s_scales(ctx, r, bridge):
    """(series scale, decay scale) of Sigma as a function of s."""
    sol = ctx.sol
    phr = float(sol.phi(r))
    rr = float(sol.rho(r))
    if bridge:
        t2 = sol.rho1 - rr
        tmin = min(rr, t2)
        th = 1.0 / (1.0 / rr + 1.0 / t2)  # harmonic decay time
    else:
        tmin = th = rr
    a, ap = ctx.spec.a, ctx.spec.ap
    series_scale = 2.0 * tmin * phr**2
    decay_scale = phr**2 * (2.0 * th * 120.0 + 8.0 * (a**2 + ap**2) + 4.0)
    return series_scale, decay_scale


def fp_s_integral(ctx, r, p, ksub, bridge=True, order=_SERIES_ORDER):
    """``int_0^inf s^p [Sigma(s) - sum_{j<ksub} c_j s^j] ds``.

    Requires p + ksub + 1 > 0 (integrable at 0 after subtraction) and
    p + ksub < 0 or Sigma decaying (it does, exponentially).
    """
    c = sigma_s_series(ctx, r, bridge, order)
    series_scale, decay_scale = _s_scales(ctx, r, bridge)
    s0 = min(0.4 * series_scale, 0.25 * decay_scale)

    # [0, s0]: closed form from the series.
    near = 0.0
    for j in range(ksub, order + 1):
        q = p + j + 1.0
        near += c[j] * s0**q / q
    # truncation diagnostic: the last retained term must be negligible
    tail_term = abs(c[order]) * s0 ** (p + order + 1.0) / abs(p + order + 1.0)
    scale_ref = abs(near) + abs(c[0]) * s0 ** abs(p + 1.0) + 1e-300

    # [s0, S]: direct quadrature with explicit subtraction.
    def f(s):
        s = np.asarray(s, dtype=float)
        sig = np.asarray(_sigma_of_s(ctx, r, s, bridge), dtype=float)
        for j in range(ksub):
            sig = sig - c[j] * s**j
        return s**p * sig

    def probe(s):
        s = np.asarray(s, dtype=float)
        return s**p * np.asarray(_sigma_of_s(ctx, r, s, bridge), dtype=float)

    big_s = decay_cutoff(probe, s0, decay_scale, probes=100)
    mid = adaptive_gl(f, s0, big_s, rtol=1e-10,
                      atol=1e-13 * scale_ref + 1e-250, confirm=1)

    # [S, inf): Sigma negligible; power tails of the subtracted monomials.
    tail = 0.0
    for j in range(ksub):
        q = p + j + 1.0
        if q >= 0.0:
            raise ValueError("subtracted monomial not integrable at infinity")
        tail += c[j] * big_s**q / q

    if tail_term > 1e-9 * (abs(near + mid + tail) + scale_ref):
        raise RuntimeError("Sigma series truncation too coarse for s0")
    return near + mid + tail


def decay_exponent(ctx, r, ksub, bridge=True):
    """Empirical log-slope of ``|T^{2k}_b Sigma|`` near b = 0 (diagnostic).

    After subtracting ``ksub`` s-Taylor terms the remainder is
    ``O(b^{2 ksub})``, so the slope should be >= 2*ksub (up to noise).
    """
    c = sigma_s_series(ctx, r, bridge)
    series_scale, _ = _s_scales(ctx, r, bridge)
    b = np.sqrt(series_scale) * np.array([0.05, 0.1])
    vals = []
    for bb in b:
        s = bb * bb
        sig = float(_sigma_of_s(ctx, r, s, bridge))
        for j in range(ksub):
            sig -= c[j] * s**j
        vals.append(abs(sig) + 1e-300)
    return float(np.log(vals[1] / vals[0]) / np.log(b[1] / b[0]))


# ---------------------------------------------------------------------------
# Outer integrals in r.
# ---------------------------------------------------------------------------

def _outer_integral(h, breakpoints, f, rtol=1e-9):
    """``int f(r) dr`` over supp h, split at the given interior breakpoints.

    ``f`` receives an array of r values and must return matching values.
    """
    lo, hi = h.support
    pts = sorted({lo, hi, *(b for b in breakpoints if lo < b < hi)})
    total = 0.0
    scale = 0.0
    for left, right in zip(pts[:-1], pts[1:]):
        part = adaptive_gl(f, left, right, rtol=rtol,
                           atol=1e-13 * scale + 1e-280, confirm=1)
        total += part
        scale = max(scale, abs(part))
    return total


def _vec_over_r(scalar_f):
    def g(r):
        r = np.asarray(r, dtype=float)
        return np.array([scalar_f(float(x)) for x in r.ravel()]
                        ).reshape(r.shape)
    return g


# ---------------------------------------------------------------------------
# Right-hand sides.
# ---------------------------------------------------------------------------

def _term_contexts(case):
    return [(coef, m, SigmaContext(case.spec, m)) for coef, m in case.phi.terms]


def rhs_ibpf(case, route="branch"):
    """The right-hand side of the IbPF for the case, by the requested route
    (``"branch"``: the dimension-dependent formulas; ``"unified"``: the
    mu_{delta-3} finite-part form)."""
    d = case.spec.delta
    bridge = case.mode == "bridge"
    h = case.h
    is3 = abs(d - 3.0) < _INT_GUARD
    is1 = abs(d - 1.0) < _INT_GUARD

    if route == "unified":
        if abs(d - 2.0) < _DELTA2_GUARD:
            raise ValueError(
                "unified evaluator disabled near delta = 2 "
                "(analytically removable pole)")
        return _rhs_unified(case, bridge)
    if route != "branch":
        raise ValueError(f"unknown route {route!r}")

    total = 0.0
    for coef, m, ctx in _term_contexts(case):
        bps = m.breakpoints()
        if is3:
            def per_r(r, ctx=ctx):
                return -0.5 * h(r) * sigma_s_series(ctx, r, bridge, 2)[0]
        elif is1:
            def per_r(r, ctx=ctx):
                # d^2/db^2 Sigma |_0 = 2 c_1, times the prefactor 1/4
                return 0.5 * h(r) * sigma_s_series(ctx, r, bridge, 2)[1]
        else:
            kappa = (d - 3.0) * (d - 1.0) / 4.0
            ksub = max(math.floor((3.0 - d) / 2.0) + 1, 0)
            p = (d - 5.0) / 2.0

            def per_r(r, ctx=ctx, kappa=kappa, ksub=ksub, p=p):
                # the 1/2 converts the b-integral to the s-integral
                return -kappa * h(r) * 0.5 * fp_s_integral(
                    ctx, r, p, ksub, bridge)

        total += coef * _outer_integral(h, bps, _vec_over_r(per_r))
    return total


def _rhs_unified(case, bridge):
    d = case.spec.delta
    h = case.h
    alpha = d - 3.0
    pref = -special.gamma(d) / (4.0 * (d - 2.0))
    total = 0.0
    for coef, m, ctx in _term_contexts(case):
        bps = m.breakpoints()

        def per_r(r, ctx=ctx):
            c = sigma_s_series(ctx, r, bridge)
            dz = np.zeros(2 * len(c) - 1)
            fac = special.factorial(2 * np.arange(len(c)))
            dz[::2] = c * fac  # even b-derivatives from s-coefficients
            fn = SmoothTestFn(
                [lambda b, ctx=ctx, r=r: np.asarray(
                    _sigma_of_s(ctx, r, np.asarray(b, float) ** 2, bridge))],
                derivs_at_zero=dz, label="Sigma")
            return h(r) * mu_pair(alpha, fn)

        total += coef * _outer_integral(h, bps, _vec_over_r(per_r), rtol=1e-9)
    return pref * total


def gamma_3(r, a):
    """The delta = 3 boundary intensity gamma(r, a):

        1/sqrt(2 pi r^3 (1-r)^3) * (1 if a = 0 else
                                    2 a^2 e^{-a^2/(2 r (1-r))}/(1 - e^{-2 a^2}))
    """
    if not 0.0 < r < 1.0 or a < 0:
        raise ValueError("need r in (0,1) and a >= 0")
    base = 1.0 / math.sqrt(2.0 * math.pi * r**3 * (1.0 - r) ** 3)
    if a == 0.0:
        return base
    return base * 2.0 * a**2 * math.exp(-a**2 / (2.0 * r * (1.0 - r))) \
        / (-math.expm1(-2.0 * a**2))


# ---------------------------------------------------------------------------
# Left-hand sides.
# ---------------------------------------------------------------------------

def lhs_uncond_analytic(case, route="finite-part"):
    """``E[d_h Phi] + E[<h'', X> Phi]`` for the unconditioned process:

        sum_i c_i K(a, m_i) int h_r phi_r^{-3} zeta''(rho_r) dr.
    """
    if case.mode != "unconstrained":
        raise ValueError("unconditioned left-hand side needs unconstrained mode")
    d, a = case.spec.delta, case.spec.a
    h = case.h
    total = 0.0
    for coef, m, ctx in _term_contexts(case):
        sol = ctx.sol

        def per_r(r, sol=sol):
            phr = float(sol.phi(r))
            rr = float(sol.rho(r))
            return h(r) * phr ** (-3.0) * zeta_second_deriv(d, a, rr, route)

        total += coef * ctx.K * _outer_integral(
            h, m.breakpoints(), _vec_over_r(per_r), rtol=1e-9)
    return total


def bridge_mean_phi(ctx, r):
    """``E[X_r Phi]`` for one exponential term under the bridge law:
    ``(1/2) int_0^inf s^{(delta-1)/2} Sigma(s) ds``."""
    d = ctx.spec.delta
    return 0.5 * fp_s_integral(ctx, r, (d - 1.0) / 2.0, 0, bridge=True)


def lhs_bridge_analytic(case):
    """``E[d_h Phi] + E[<h'', X> Phi] = E[<h'' - 2 h m, X> Phi]`` for the
    bridge, per exponential term through ``E[X_r Phi]``."""
    if case.mode != "bridge":
        raise ValueError("bridge left-hand side needs bridge mode")
    h = case.h
    total = 0.0
    for coef, m, ctx in _term_contexts(case):
        mean = lambda r, ctx=ctx: bridge_mean_phi(ctx, r)
        part = _outer_integral(
            h, m.breakpoints(),
            _vec_over_r(lambda r: float(h.d2(r)) * mean(r)), rtol=1e-9)
        for t, w in m.atoms:
            hval = float(h(t))
            if hval != 0.0:
                part -= 2.0 * w * hval * mean(t)
        if m.pieces:
            part -= 2.0 * _outer_integral(
                h, m.breakpoints(),
                _vec_over_r(lambda r: float(h(r)) * float(m.density_at(r))
                            * mean(r)), rtol=1e-9)
        total += coef * part
    return total


# ---------------------------------------------------------------------------
# Monte Carlo left-hand side.
# ---------------------------------------------------------------------------

def _hat_weights(times, g, order=8):
    """Weights w_j = int g(r) Lambda_j(r) dr against the hat functions of
    the grid, exact for the piecewise-linear interpolant of the path."""
    times = np.asarray(times, dtype=float)
    nodes, wq = np.polynomial.legendre.leggauss(order)
    lo, hi = times[:-1], times[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    rr = mid[:, None] + half[:, None] * nodes[None, :]  # (nint, order)
    gv = np.asarray(g(rr.ravel()), dtype=float).reshape(rr.shape)
    lam_right = (rr - lo[:, None]) / (hi - lo)[:, None]
    wl = np.sum(gv * (1.0 - lam_right) * wq[None, :], axis=1) * half
    wr = np.sum(gv * lam_right * wq[None, :], axis=1) * half
    w = np.zeros(len(times))
    w[:-1] += wl
    w[1:] += wr
    return w


def mc_times(case, mesh_n=513):
    """Sample times: uniform mesh augmented with the atom locations of every
    measure in the functional (so atom pairings are exact, not interpolated)."""
    pts = set(np.linspace(0.0, 1.0, mesh_n))
    for _, m in case.phi.terms:
        pts.update(t for t, _ in m.atoms)
    return np.array(sorted(pts))


def lhs_mc(case, n, rng, mesh_n=513):
    """Monte Carlo estimate (mean, stderr) of ``E[<h'' - 2 h m, X> Phi]``
    over exactly sampled bridge paths."""
    if case.mode != "bridge":
        raise ValueError("Monte Carlo left-hand side needs bridge mode")
    spec = case.spec
    h = case.h
    times = mc_times(case, mesh_n)
    w_h2 = _hat_weights(times, h.d2)

    prepared = []
    for coef, m in case.phi.terms:
        atom_idx = [(int(np.argmin(np.abs(times - t))), w, float(h(t)))
                    for t, w in m.atoms]
        if m.pieces:
            w_m = _hat_weights(times, m.density_at)
            w_hm = _hat_weights(
                times, lambda r: np.asarray(h(r)) * np.asarray(m.density_at(r)))
        else:
            w_m = w_hm = None
        prepared.append((coef, atom_idx, w_m, w_hm))

    def sample_values(count, stream):
        paths = bessel_bridge_general(spec.delta, spec.a, spec.ap,
                                      times, stream, size=count)
        x2 = paths**2
        acc = np.zeros(count)
        for coef, atom_idx, w_m, w_hm in prepared:
            pair_x2 = np.zeros(count)
            pair_hx = np.zeros(count)
            for idx, w, hval in atom_idx:
                pair_x2 += w * x2[:, idx]
                pair_hx += w * hval * paths[:, idx]
            if w_m is not None:
                pair_x2 += x2 @ w_m
                pair_hx += paths @ w_hm
            acc += coef * (paths @ w_h2 - 2.0 * pair_hx) * np.exp(-pair_x2)
        return acc

    return mc_estimate(sample_values, n, rng)


# ---------------------------------------------------------------------------
# Verification driver.
# ---------------------------------------------------------------------------

def verify(case, mc_n=0, rng=None, route="branch"):
    """Evaluate both sides and return a :class:`VerifyReport`.

    ``mc_n > 0`` adds a Monte Carlo left-hand side (bridge mode only) with
    the pass rule |lhs_mc - rhs| <= 3 stderr.
    """
    import time
    t0 = time.time()
    rhs = rhs_ibpf(case, route=route)
    if case.mode == "bridge":
        lhs = lhs_bridge_analytic(case)
    else:
        lhs = lhs_uncond_analytic(case)
    err = abs(lhs - rhs)
    rerr = rel_err(lhs, rhs)
    report = VerifyReport(
        case_id=case.case_id, lhs_analytic=lhs, rhs=rhs,
        abs_err=err, rel_err=rerr, passed=rerr <= case.tol)
    if mc_n > 0 and case.mode == "bridge":
        if rng is None:
            raise ValueError("Monte Carlo verification needs an RngStream")
        mean, se = lhs_mc(case, mc_n, rng)
        report.lhs_mc = mean
        report.stderr = se
        report.mc_passed = abs(mean - rhs) <= 3.0 * se
    report.elapsed_s = time.time() - t0
    return report


def uncond_from_bridge_rhs(case_template, a, nodes=32, amax=None):
    """Conditioning identity: integrate the bridge right-hand side over the
    endpoint law, ``int rhs(a, ap) p^delta_1(a, ap) dap``; must match the
    unconstrained right-hand side at the same ``a``."""
    d = case_template.spec.delta
    if amax is None:
        amax = a + 6.0

    x, w = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * amax * (x + 1.0)
    w = 0.5 * amax * w
    total = 0.0
    for ap, wt in zip(x, w):
        case = IbpfCase(BridgeSpec(d, a, float(ap)), case_template.phi,
                        case_template.h, mode="bridge")
        total += wt * rhs_ibpf(case) * float(p_delta_t(d, 1.0, a, float(ap)))
    return total
