"""Potentials F = Gamma + Pi with a convex (possibly singular) Gamma.

Gamma enters the scheme only through its Moreau machinery: the resolvent
J_mu(r) = (I + mu * dGamma)^{-1}(r), the Yosida map gamma_mu = (I - J_mu)/mu,
and the envelope

    Gamma_mu(r) = inf_z { Gamma(z) + |z - r|^2 / (2 mu) }
                = Gamma(J_mu(r)) + (mu/2) gamma_mu(r)^2.

All maps are vectorized over numpy arrays.  Built-in convex pieces:

* quartic           Gamma(z) = z^4 / 4
* logarithmic       entropy (theta/2)[(1+z)log(1+z) + (1-z)log(1-z)] on
                    [-1, 1], +infinity outside (finite limit values at +-1)
* obstacle          indicator of [-1, 1]
* custom            user-supplied value and prox oracles
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, NumericalError

_NEWTON_TOL = 1e-14
_NEWTON_MAXIT = 200

INF = math.inf


# ---------------------------------------------------------------------------
# convex pieces


def _gamma_quartic(r):
    return 0.25 * np.asarray(r, dtype=float) ** 4


def _gamma_obstacle(r):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) <= 1.0, 0.0, INF)


def _gamma_log(theta):
    def value(r):
        r = np.asarray(r, dtype=float)
        out = np.full(r.shape, INF)
        inside = np.abs(r) < 1.0
        ri = r[inside]
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = (1.0 + ri) * np.log1p(ri) + (1.0 - ri) * np.log1p(-ri)
        out[inside] = 0.5 * theta * ent
        out[np.abs(r) == 1.0] = theta * math.log(2.0)
        return out

    return value


def _solve_monotone(residual, derivative, lo, hi, x0):
    """Vectorized safeguarded Newton for strictly increasing residuals.

    Brackets are maintained per component; Newton steps falling outside the
    bracket are replaced by bisection.  Raises on non-convergence.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    x = np.clip(np.array(x0, dtype=float, copy=True), lo, hi)
    for _ in range(_NEWTON_MAXIT):
        f = residual(x)
        done = (np.abs(f) <= _NEWTON_TOL) & ((hi - lo) <= _NEWTON_TOL)
        if np.all(np.abs(f) <= _NEWTON_TOL):
            return x
        hi = np.where(f > 0, np.minimum(hi, x), hi)
        lo = np.where(f < 0, np.maximum(lo, x), lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / derivative(x)
        cand = x - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        x = np.where(done, x, cand)
    f = residual(x)
    if np.max(np.abs(f)) > 1e-9:
        raise NumericalError(
            "resolvent root-find did not converge", best=x, residual=float(np.max(np.abs(f)))
        )
    return x


@dataclass(frozen=True)
class Potential:
    """F = Gamma + Pi.  ``gamma_kind`` selects the convex piece; ``pi`` is a
    Lipschitz perturbation with pi(0) = 0 and antiderivative ``Pi``.

    ``growth`` = (a1, a2, p) records the lower bound F >= -a1 |r|^p - a2.
    ``prox_oracle(r, mu)`` must return argmin_z Gamma(z) + (z-r)^2/(2 mu)
    for custom potentials.
    """

    gamma_kind: str
    pi: Callable = field(default=lambda r: np.zeros_like(np.asarray(r, dtype=float)))
    Pi: Callable = field(default=lambda r: np.zeros_like(np.asarray(r, dtype=float)))
    c_pi: float = 0.0
    growth: tuple = (0.0, 0.0, 1.0)
    theta: float = 1.0
    theta_c: float = 2.0
    log_c: float = 1.0
    gamma_value: Optional[Callable] = None
    prox_oracle: Optional[Callable] = None
    subdiff_oracle: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.gamma_kind not in ("quartic", "logarithmic", "obstacle", "custom"):
            raise ConfigurationError(f"unknown convex piece {self.gamma_kind!r}")
        if self.gamma_kind == "custom" and (self.gamma_value is None or self.prox_oracle is None):
            raise ConfigurationError("custom potentials need value and prox oracles")
        if self.gamma_kind == "logarithmic" and not 0.0 < self.theta:
            raise ConfigurationError("logarithmic potential requires theta > 0")

    # -- convex piece -------------------------------------------------------

    def gamma(self, r):
        r = np.asarray(r, dtype=float)
        if self.gamma_kind == "quartic":
            return _gamma_quartic(r)
        if self.gamma_kind == "obstacle":
            return _gamma_obstacle(r)
        if self.gamma_kind == "logarithmic":
            return _gamma_log(self.theta)(r)
        return np.asarray(self.gamma_value(r), dtype=float)

    def gamma_domain(self) -> tuple:
        """Effective domain of Gamma as a closed interval."""
        if self.gamma_kind in ("obstacle", "logarithmic"):
            return (-1.0, 1.0)
        return (-INF, INF)

    def resolvent(self, r, mu):
        """J_mu(r): unique z with z + mu * dGamma(z) containing r."""
        r = np.asarray(r, dtype=float)
        if mu <= 0:
            raise ConfigurationError("resolvent parameter must be positive")
        if self.gamma_kind == "obstacle":
            return np.clip(r, -1.0, 1.0)
        if self.gamma_kind == "quartic":
            lo = np.minimum(r, 0.0)
            hi = np.maximum(r, 0.0)
            return _solve_monotone(
                lambda z: z + mu * z**3 - r,
                lambda z: 1.0 + 3.0 * mu * z**2,
                lo,
                hi,
                r / (1.0 + mu * r**2),
            )
        if self.gamma_kind == "logarithmic":
            # dGamma(z) = theta * artanh(z); substituting z = tanh(y) turns
            # z + mu dGamma(z) = r into tanh(y) + mu theta y = r, which is
            # smooth and strictly increasing on all of R (robust when the
            # solution hugs the endpoints)
            mt = mu * self.theta
            radius = (np.abs(r) + 2.0) / mt
            y = _solve_monotone(
                lambda y: np.tanh(y) + mt * y - r,
                lambda y: 1.0 - np.tanh(y) ** 2 + mt,
                -radius,
                radius,
                r / (1.0 + mt),
            )
            return np.tanh(y)
        return np.asarray(self.prox_oracle(r, mu), dtype=float)

    def subdiff_interval(self, r: float):
        """Subdifferential of Gamma at r as (lo, hi); None when empty."""
        r = float(r)
        if self.gamma_kind == "quartic":
            return (r**3, r**3)
        if self.gamma_kind == "obstacle":
            if abs(r) < 1.0:
                return (0.0, 0.0)
            if r == 1.0:
                return (0.0, INF)
            if r == -1.0:
                return (-INF, 0.0)
            return None
        if self.gamma_kind == "logarithmic":
            if abs(r) >= 1.0:
                return None  # slope blows up at the endpoints: empty there too
            v = 0.5 * self.theta * (math.log1p(r) - math.log1p(-r))
            return (v, v)
        if self.subdiff_oracle is not None:
            return self.subdiff_oracle(r)
        # one-sided difference quotients on the value oracle
        h = 1e-7
        g0 = float(self.gamma(r))
        gp = float(self.gamma(r + h))
        gm = float(self.gamma(r - h))
        if not math.isfinite(g0):
            return None
        lo = (g0 - gm) / h if math.isfinite(gm) else -INF
        hi = (gp - g0) / h if math.isfinite(gp) else INF
        return (lo, hi)

    def f_value(self, r):
        return self.gamma(r) + np.asarray(self.Pi(r), dtype=float)


@dataclass(frozen=True)
class RegularizedPotential:
    """Potential with Moreau parameter lambda in (0, 1)."""

    base: Potential
    lam: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ConfigurationError(f"lambda must lie in (0, 1), got {self.lam}")

    def resolvent(self, r):
        return self.base.resolvent(r, self.lam)

    def yosida(self, r):
        r = np.asarray(r, dtype=float)
        return (r - self.resolvent(r)) / self.lam

    def moreau(self, r):
        r = np.asarray(r, dtype=float)
        j = self.resolvent(r)
        return self.base.gamma(j) + (r - j) ** 2 / (2.0 * self.lam)

    def prox_envelope(self, r, t):
        """Proximal map of the envelope: argmin_p Gamma_lam(p) + (p-r)^2/(2t).

        Uses the composition rule for Moreau envelopes, which reduces the
        problem to one resolvent evaluation at parameter lam + t:
        p = (lam * r + t * J_{lam+t}(r)) / (lam + t).
        """
        r = np.asarray(r, dtype=float)
        j = self.base.resolvent(r, self.lam + t)
        return (self.lam * r + t * j) / (self.lam + t)


# ---------------------------------------------------------------------------
# operation wrappers (functional surface)


def eval_gamma(pot: Potential, r):
    return pot.gamma(r)

def resolvent(reg: RegularizedPotential, r):
    return reg.resolvent(r)

def yosida(reg: RegularizedPotential, r):
    return reg.yosida(r)

def moreau(reg: RegularizedPotential, r):
    return reg.moreau(r)

def subdiff_interval(pot: Potential, r: float):
    return pot.subdiff_interval(r)


def dist_to_interval(v: float, interval) -> float:
    if interval is None:
        return INF
    lo, hi = interval
    if v < lo:
        return lo - v
    if v > hi:
        return v - hi
    return 0.0


def subdiff_membership_gap(pot: Potential, j: float, y: float):
    """Distance of y from the subdifferential of Gamma at j, accounting for
    float conditioning of j near the domain endpoints.

    The interval is widened by its spread under a few-ulp perturbation of j.
    Returns None when j has collapsed onto an endpoint with empty
    subdifferential (the membership is not evaluable in float64 there).
    """
    iv = pot.subdiff_interval(j)
    lo_d, hi_d = pot.gamma_domain()
    near_endpoint = min(abs(j - lo_d), abs(j - hi_d)) <= 1e-12
    if iv is None:
        return None if near_endpoint else INF
    gap = dist_to_interval(y, iv)
    if gap == 0.0:
        return 0.0
    eps_j = 8.0 * np.finfo(float).eps * max(1.0, abs(j))
    lo, hi = iv
    hit_boundary = False
    for pj in (j - eps_j, j + eps_j):
        iv2 = pot.subdiff_interval(pj)
        if iv2 is None:
            hit_boundary = True
            continue
        lo, hi = min(lo, iv2[0]), max(hi, iv2[1])
    gap = dist_to_interval(y, (lo, hi))
    if gap > 0.0 and hit_boundary and pot.subdiff_interval(lo_d if abs(j - lo_d) < abs(j - hi_d) else hi_d) is None:
        return None  # saturated against a blow-up endpoint
    return gap


# ---------------------------------------------------------------------------
# built-in potentials


def quartic_double_well() -> Potential:
    """Polynomial double well (1 - z^2)^2 / 4 shifted to F(0) = 0, split as
    Gamma = z^4/4 and Pi = -z^2/2."""
    return Potential(
        gamma_kind="quartic",
        pi=lambda r: -np.asarray(r, dtype=float),
        Pi=lambda r: -0.5 * np.asarray(r, dtype=float) ** 2,
        c_pi=1.0,
        growth=(0.0, 0.25, 1.0),
        name="quartic",
    )


def obstacle_double_well() -> Potential:
    """Double-obstacle potential: indicator of [-1, 1] plus -z^2/2."""
    return Potential(
        gamma_kind="obstacle",
        pi=lambda r: -np.asarray(r, dtype=float),
        Pi=lambda r: -0.5 * np.asarray(r, dtype=float) ** 2,
        c_pi=1.0,
        growth=(0.0, 0.5, 1.0),
        name="obstacle",
    )


def logarithmic_double_well(theta: float = 1.0, theta_c: float = 2.0, c: Optional[float] = None) -> Potential:
    """Logarithmic (entropy) double well; requires 0 < theta < theta_c and a
    quadratic coefficient c > theta / 2 (default theta_c / 2)."""
    if not 0.0 < theta < theta_c:
        raise ConfigurationError("logarithmic potential requires 0 < theta < theta_c")
    if c is None:
        c = 0.5 * theta_c
    if not c > 0.5 * theta:
        raise ConfigurationError("logarithmic potential requires c > theta / 2")
    return Potential(
        gamma_kind="logarithmic",
        pi=lambda r: -2.0 * c * np.asarray(r, dtype=float),
        Pi=lambda r: -c * np.asarray(r, dtype=float) ** 2,
        c_pi=2.0 * c,
        growth=(0.0, c, 1.0),
        theta=theta,
        theta_c=theta_c,
        log_c=c,
        name="logarithmic",
    )


def zero_potential() -> Potential:
    """F identically zero (pure interaction flow)."""
    return Potential(
        gamma_kind="custom",
        gamma_value=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        prox_oracle=lambda r, mu: np.asarray(r, dtype=float),
        subdiff_oracle=lambda r: (0.0, 0.0),
        name="zero",
    )


def linear_gamma_potential() -> Potential:
    """Gamma(z) = z^2/2 (so dGamma = identity); handy closed-form reference."""
    return Potential(
        gamma_kind="custom",
        gamma_value=lambda r: 0.5 * np.asarray(r, dtype=float) ** 2,
        prox_oracle=lambda r, mu: np.asarray(r, dtype=float) / (1.0 + mu),
        subdiff_oracle=lambda r: (r, r),
        name="linear_gamma",
    )


BUILTIN_POTENTIALS = {
    "quartic": quartic_double_well,
    "obstacle": obstacle_double_well,
    "logarithmic": logarithmic_double_well,
    "zero": zero_potential,
    "linear_gamma": linear_gamma_potential,
}


def make_potential(name: str, **kwargs) -> Potential:
    if name not in BUILTIN_POTENTIALS:
        raise ConfigurationError(
            f"unknown potential {name!r}; choose from {sorted(BUILTIN_POTENTIALS)}"
        )
    return BUILTIN_POTENTIALS[name](**kwargs)


# ---------------------------------------------------------------------------
# certificates


def sample_points(extra_singular: bool = True) -> np.ndarray:
    """Canonical 401-point sampling of [-4, 4], optionally augmented with
    points hugging the domain endpoints of the singular families."""
    pts = np.linspace(-4.0, 4.0, 401)
    if extra_singular:
        near = np.array([1.0 - 10.0**-k for k in range(1, 9)])
        pts = np.concatenate([pts, near, -near])
    return np.sort(pts)


def verify_coercivity(pot: Potential, lam_values, r_samples=None) -> dict:
    """Fit the smallest (alpha, a3, beta) with
    Gamma_lam(r) + Pi(r) >= -alpha sqrt(lam) r^2 - a3 |r|^p - beta
    on the sample set, for each lambda; PASS iff the fitted constants stay
    bounded as lambda decreases."""
    from scipy.optimize import linprog

    if r_samples is None:
        r_samples = np.linspace(-10.0, 10.0, 801)
    r_samples = np.asarray(r_samples, dtype=float)
    p = pot.growth[2]
    fits = []
    for lam in sorted(lam_values, reverse=True):
        reg = RegularizedPotential(pot, lam)
        deficit = -(reg.moreau(r_samples) + np.asarray(pot.Pi(r_samples), dtype=float))
        # alpha * sqrt(lam) r^2 + a3 |r|^p + beta >= deficit, minimize the sum
        a_ub = -np.column_stack(
            [math.sqrt(lam) * r_samples**2, np.abs(r_samples) ** p, np.ones_like(r_samples)]
        )
        res = linprog(
            c=[1.0, 1.0, 1.0],
            A_ub=a_ub,
            b_ub=-deficit,
            bounds=[(0.0, None)] * 3,
            method="highs",
        )
        if not res.success:
            return {"name": "coercivity", "passed": False, "fits": fits, "notes": res.message}
        fits.append({"lambda": lam, "alpha": res.x[0], "a3": res.x[1], "beta": res.x[2]})
    first, last = fits[0], fits[-1]
    bounded = all(last[k] <= 10.0 * first[k] + 10.0 for k in ("alpha", "a3", "beta"))
    return {
        "name": "coercivity",
        "passed": bool(bounded),
        "fits": fits,
        "alpha": last["alpha"],
        "a3": last["a3"],
        "beta": last["beta"],
    }


def gamma_liminf_check(pot: Potential, r_samples, lambda_sweep, cap: float = 1e3, tol: float = 1e-3) -> dict:
    """Pointwise-convergence test of the envelopes: Gamma_lam increases to
    Gamma on the finite part of the domain and blows past ``cap`` outside."""
    lams = sorted(lambda_sweep, reverse=True)
    failures = []
    for r in np.atleast_1d(r_samples):
        g = float(pot.gamma(r))
        vals = [float(RegularizedPotential(pot, lam).moreau(r)) for lam in lams]
        if math.isfinite(g):
            gaps = [g - v for v in vals]
            if any(gap < -1e-9 for gap in gaps):
                failures.append((float(r), "envelope exceeded Gamma"))
            elif any(gaps[i + 1] > gaps[i] + 1e-12 for i in range(len(gaps) - 1)):
                failures.append((float(r), "gap not monotone along the sweep"))
            elif gaps[-1] > tol * (1.0 + abs(g)):
                failures.append((float(r), f"gap {gaps[-1]:.2e} above tolerance"))
        else:
            if vals[-1] <= cap:
                failures.append((float(r), f"envelope {vals[-1]:.2e} below cap at lambda min"))
    return {"name": "gamma_liminf", "passed": not failures, "failures": failures}


def moreau_bruteforce(pot: Potential, r: float, lam: float, rounds: int = 3, points: int = 4001) -> float:
    """Independent envelope oracle: dense 1D minimization of
    Gamma(z) + (z - r)^2 / (2 lam), refined around the argmin."""
    lo = min(r, -1.5) - 1.0
    hi = max(r, 1.5) + 1.0
    best_z = 0.0
    for _ in range(rounds):
        z = np.linspace(lo, hi, points)
        vals = pot.gamma(z) + (z - r) ** 2 / (2.0 * lam)
        k = int(np.nanargmin(np.where(np.isfinite(vals), vals, np.inf)))
        best_z = z[k]
        span = (hi - lo) / (points - 1)
        lo, hi = best_z - 2 * span, best_z + 2 * span
    z = np.linspace(lo, hi, points)
    vals = pot.gamma(z) + (z - r) ** 2 / (2.0 * lam)
    return float(np.min(np.where(np.isfinite(vals), vals, np.inf)))


def _check(name, value, threshold, passed, notes=""):
    return {
        "name": name,
        "value": value,
        "threshold": threshold,
        "passed": bool(passed),
        "notes": notes,
    }


def potential_certificate(pot: Potential, lambdas, tol: float = 1e-9) -> dict:
    """Full invariant suite for one potential over a lambda sweep."""
    checks = []
    pts = sample_points()
    finite = np.isfinite(pot.gamma(pts))

    g0 = float(pot.gamma(0.0))
    checks.append(_check("gamma_zero", g0, tol, abs(g0) <= tol))
    gmin = float(np.nanmin(np.where(finite, pot.gamma(pts), np.nan)))
    checks.append(_check("gamma_nonnegative", gmin, -tol, gmin >= -tol))

    mid = 0.5 * (pts[:-1] + pts[1:])
    with np.errstate(invalid="ignore"):
        convexity_defect = pot.gamma(mid) - 0.5 * (pot.gamma(pts[:-1]) + pot.gamma(pts[1:]))
    defect = float(np.nanmax(np.where(np.isfinite(convexity_defect), convexity_defect, -np.inf)))
    checks.append(_check("gamma_midpoint_convex", defect, 1e-9, defect <= 1e-9))

    pi0 = float(np.asarray(pot.pi(0.0)))
    checks.append(_check("pi_zero", pi0, tol, abs(pi0) <= tol))
    dpi = np.abs(np.diff(np.asarray(pot.pi(pts), dtype=float)))
    dr = np.abs(np.diff(pts))
    lip = float(np.max(dpi / np.maximum(dr, 1e-300)))
    checks.append(_check("pi_lipschitz", lip, pot.c_pi + 1e-6, lip <= pot.c_pi + 1e-6))

    a1, a2, p = pot.growth
    fvals = np.asarray(pot.f_value(pts), dtype=float)
    bound = -a1 * np.abs(pts) ** p - a2
    worst = float(np.nanmin(np.where(np.isfinite(fvals), fvals - bound, np.inf)))
    checks.append(_check("growth_bound", worst, -tol, worst >= -tol))

    for lam in lambdas:
        reg = RegularizedPotential(pot, lam)
        tag = f"[lam={lam:g}]"
        j = reg.resolvent(pts)
        gl = reg.moreau(pts)
        yo = reg.yosida(pts)

        identity_gap = float(
            np.max(np.abs(gl - (pot.gamma(j) + 0.5 * lam * yo**2)))
        )
        checks.append(_check(f"moreau_identity{tag}", identity_gap, tol, identity_gap <= tol))

        gap = pot.gamma(pts) - gl
        below = float(np.nanmin(np.where(finite, gap, np.inf)))
        checks.append(_check(f"envelope_below_gamma{tag}", below, -tol, below >= -tol))

        cap = pts**2 / (2.0 * lam) + abs(g0)
        cap_gap = float(np.max(gl - cap))
        checks.append(_check(f"quadratic_cap{tag}", cap_gap, tol, cap_gap <= tol))

        combined = abs(g0) + (pot.c_pi / 2.0 + 1.0 / (2.0 * lam)) * pts**2
        comb_gap = float(np.max(gl + np.asarray(pot.Pi(pts), dtype=float) - combined))
        checks.append(_check(f"combined_cap{tag}", comb_gap, tol, comb_gap <= tol))

        dj = np.abs(np.diff(j))
        nonexp = float(np.max(dj - dr))
        checks.append(_check(f"resolvent_nonexpansive{tag}", nonexp, tol, nonexp <= tol))

        dy = np.diff(yo)
        lip_gap = float(np.max(np.abs(dy) - dr / lam))
        checks.append(_check(f"yosida_lipschitz{tag}", lip_gap, tol, lip_gap <= tol))
        mono = float(np.min(dy))
        checks.append(_check(f"yosida_monotone{tag}", mono, -tol, mono >= -tol))

        sel_worst = 0.0
        saturated = 0
        stride = len(pts) // 80 + 1
        for jj, yy in zip(j[::stride], yo[::stride]):
            gap = subdiff_membership_gap(pot, float(jj), float(yy))
            if gap is None:
                saturated += 1
                continue
            sel_worst = max(sel_worst, gap)
        checks.append(
            _check(
                f"yosida_in_subdiff{tag}",
                sel_worst,
                tol,
                sel_worst <= tol,
                notes=f"{saturated} float-saturated resolvent points skipped" if saturated else "",
            )
        )

        h = 1e-6
        fd = (reg.moreau(pts + h) - reg.moreau(pts - h)) / (2.0 * h)
        fd_gap = float(np.max(np.abs(fd - yo)))
        fd_tol = h * (1.0 / lam) * 10.0 + 1e-8
        checks.append(_check(f"envelope_derivative{tag}", fd_gap, fd_tol, fd_gap <= fd_tol))

    checks.append(verify_coercivity(pot, lambdas))
    liminf_pts = np.array([0.0, 0.3, 1.0 - 1e-3, 2.0, -2.0])
    checks.append(gamma_liminf_check(pot, liminf_pts, sorted(set(list(lambdas) + [1e-4, 1e-5]))))
    return {"potential": pot.name, "passed": all(c["passed"] for c in checks), "checks": checks}
