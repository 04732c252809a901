"""Utility-optimal basis-risk weighting for pure parametric contracts.

Implements the first-order system V1(gamma) = V2(gamma) for the expected
value, standard deviation, and variance premium principles, the two
existence boundary conditions, the fallback decision logic when a boundary
fails (no insurance vs. extreme weightings vs. full indemnity), the closed
form under exponential utility with the expected-value principle, and
empirical expected-utility curves.

V1 is strictly decreasing and V2 strictly increasing in gamma for concave
utilities, so a sign change of V1 - V2 pins down the unique optimum and
bisection is globally convergent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .contracts import (
    ContractSpec,
    LossIndexSample,
    PremiumPrinciple,
    index_payout,
    premium,
    pure_parametric_payout,
    split_by_trigger,
)
from .expectile import (
    BasisRiskWeight,
    EmpiricalSample,
    Level,
    alpha_from_gamma,
    expectile,
    expectile_grid,
)

__all__ = [
    "UtilityContext",
    "UtilityDomainError",
    "TriggeredSplit",
    "Decision",
    "WeightingSolution",
    "v1_v2",
    "check_bounds",
    "solve_gamma_star",
    "violated_boundary_decision",
    "closed_form_exponential",
    "utility_curve",
]


class UtilityDomainError(ValueError):
    """Utility evaluated outside its domain (e.g. power utility at x <= 0)."""


class PremiumDominatesError(ValueError):
    """Premium multiplier c >= 1: premiums would a.s. dominate payouts."""


class MonotonicityError(RuntimeError):
    """V1/V2 traces are not monotone beyond numerical noise."""


@dataclass(frozen=True)
class UtilityContext:
    """Twice differentiable concave utility plus initial wealth."""

    u: object
    u_prime: object
    u_second: object
    w0: float
    name: str = "custom"

    @classmethod
    def exponential(cls, beta: float, w0: float = 0.0):
        if beta <= 0:
            raise ValueError("beta must be positive")
        return cls(
            u=lambda x: 1.0 - np.exp(-beta * np.asarray(x, dtype=np.float64)),
            u_prime=lambda x: beta * np.exp(-beta * np.asarray(x, dtype=np.float64)),
            u_second=lambda x: -beta * beta * np.exp(-beta * np.asarray(x, dtype=np.float64)),
            w0=w0,
            name=f"exponential(beta={beta})",
        )

    @classmethod
    def power(cls, eta: float, w0: float):
        if eta <= 0 or eta == 1.0:
            raise ValueError("eta must be positive and != 1")

        def _check(x):
            x = np.asarray(x, dtype=np.float64)
            if np.any(x <= 0.0):
                raise UtilityDomainError("utility domain violated: non-positive wealth")
            return x

        return cls(
            u=lambda x: (_check(x) ** (1.0 - eta) - 1.0) / (1.0 - eta),
            u_prime=lambda x: _check(x) ** (-eta),
            u_second=lambda x: -eta * _check(x) ** (-eta - 1.0),
            w0=w0,
            name=f"power(eta={eta})",
        )

    @classmethod
    def custom(cls, u, u_prime, u_second, w0: float):
        return cls(u=u, u_prime=u_prime, u_second=u_second, w0=w0, name="custom")

    def check_support(self, wealths) -> None:
        """Sample-based validation of u' > 0 and u'' <= 0 on realized wealths."""
        w = np.asarray(wealths, dtype=np.float64)
        up = np.asarray(self.u_prime(w), dtype=np.float64)
        upp = np.asarray(self.u_second(w), dtype=np.float64)
        if np.any(up <= 0.0):
            raise UtilityDomainError("marginal utility must be strictly positive")
        if np.any(upp > 1e-12 * np.abs(up).max()):
            raise UtilityDomainError("utility must be concave on the wealth support")


class TriggeredSplit:
    """Conditional loss samples given trigger / no trigger, plus P(trigger).

    The empirical stand-in for the pair of conditional distributions used by
    the sample-average first-order system.
    """

    def __init__(self, triggered: EmpiricalSample, untriggered: EmpiricalSample,
                 p_trigger: float):
        if not (0.0 < p_trigger < 1.0):
            raise ValueError("trigger probability must lie strictly inside (0,1)")
        self.triggered = triggered
        self.untriggered = untriggered
        self.p = float(p_trigger)

    @classmethod
    def from_sample(cls, sample: LossIndexSample, spec: ContractSpec):
        trig, untrig = split_by_trigger(sample, spec)
        return cls(EmpiricalSample(trig.losses), EmpiricalSample(untrig.losses),
                   len(trig) / len(sample))

    def mean_loss(self) -> float:
        return self.p * self.triggered.mean + (1.0 - self.p) * self.untriggered.mean

    def var_loss(self) -> float:
        e2 = (self.p * float(np.sum(self.triggered.weights * self.triggered.values ** 2))
              + (1.0 - self.p) * float(np.sum(self.untriggered.weights
                                              * self.untriggered.values ** 2)))
        return e2 - self.mean_loss() ** 2


class Decision(enum.Enum):
    INTERIOR_OPTIMUM = "interior_optimum"
    PREFER_NO_INSURANCE = "prefer_no_insurance"
    PREFER_SMALLEST_ALPHA = "prefer_smallest_alpha"
    PREFER_INDEMNITY = "prefer_indemnity"
    PREFER_LARGEST_ALPHA = "prefer_largest_alpha"
    ENDPOINT_LOW = "endpoint_low"
    ENDPOINT_HIGH = "endpoint_high"


@dataclass
class WeightingSolution:
    gamma_star: float | None
    alpha_star: float | None
    lower_bound_holds: bool
    upper_bound_holds: bool
    decision: Decision
    residual: float | None = None
    trace: dict | None = None  # {"gamma": ..., "v1": ..., "v2": ...}


def _wmean(sample: EmpiricalSample, values: np.ndarray) -> float:
    return float(np.sum(sample.weights * values))


def _premium_multiplier(spec: ContractSpec, p: float) -> float:
    """c such that the E/SD premium of a constant payout y on trigger is c*y."""
    if spec.principle is PremiumPrinciple.EXPECTED_VALUE:
        return (1.0 + spec.rho) * p
    if spec.principle is PremiumPrinciple.STD_DEV:
        return p + spec.rho * math.sqrt(p * (1.0 - p))
    raise ValueError("no constant multiplier under the variance principle")


def _v_pair_at_level(split: TriggeredSplit, spec: ContractSpec,
                     utility: UtilityContext, x: float):
    """(V1, V2) of the critical-point system, parameterized by the payout level x.

    With x = e_gamma(S | trigger) this is the sample version of the
    first-order system; evaluated at fixed x it yields the boundary-condition
    sides (ratio comparisons against b reduce to the sign of V1 - V2).
    """
    p = split.p
    w0 = utility.w0
    st = split.triggered
    su = split.untriggered
    if spec.principle in (PremiumPrinciple.EXPECTED_VALUE, PremiumPrinciple.STD_DEV):
        c = _premium_multiplier(spec, p)
        if c >= 1.0:
            raise PremiumDominatesError("premium dominates payout (c >= 1)")
        v1 = p * (1.0 - c) * _wmean(st, utility.u_prime(w0 - st.values + (1.0 - c) * x))
        v2 = (1.0 - p) * c * _wmean(su, utility.u_prime(w0 - su.values - c * x))
        return v1, v2
    # variance principle
    big_r = p * (1.0 + spec.rho * (1.0 - p) * x)
    small_r = p * (1.0 + 2.0 * spec.rho * (1.0 - p) * x)
    v1 = p * (1.0 - small_r) * _wmean(st, utility.u_prime(w0 - st.values + (1.0 - big_r) * x))
    v2 = (1.0 - p) * small_r * _wmean(su, utility.u_prime(w0 - su.values - big_r * x))
    return v1, v2


def v1_v2(split: TriggeredSplit, spec: ContractSpec, utility: UtilityContext,
          gamma: Level | float):
    """Sample versions of the decreasing/increasing sides at level gamma."""
    x = expectile(split.triggered, gamma)
    return _v_pair_at_level(split, spec, utility, x)


def check_bounds(split: TriggeredSplit, spec: ContractSpec, utility: UtilityContext,
                 n_scan: int = 50, x_low: float | None = None,
                 x_high: float | None = None):
    """Evaluate the two existence boundary conditions.

    The lower bound is checked at the empirical essential infimum of the
    triggered losses (or at x_low when restricting to a subinterval of
    levels). The upper bound holds if V1 < V2 for *some* k, scanned over a
    log-spaced grid crowded toward the supremum, including the limit point.
    Returns (lower_holds, upper_holds, witnesses).
    """
    lo = split.triggered.min if x_low is None else x_low
    hi = split.triggered.max if x_high is None else x_high
    v1, v2 = _v_pair_at_level(split, spec, utility, lo)
    lower = v1 > v2
    witnesses = {"lower_k": lo, "lower_v1": v1, "lower_v2": v2}
    # log-spaced toward hi: hi - (hi-lo)*10^-t
    ts = np.linspace(0.0, 9.0, n_scan)
    ks = hi - (hi - lo) * 10.0 ** (-ts)
    ks = np.append(ks, hi)
    upper = False
    for k in ks:
        v1k, v2k = _v_pair_at_level(split, spec, utility, float(k))
        if v1k < v2k:
            upper = True
            witnesses["upper_k"] = float(k)
            witnesses["upper_v1"] = v1k
            witnesses["upper_v2"] = v2k
            break
    return lower, upper, witnesses


def _trace(split, spec, utility, gammas):
    xs = expectile_grid(split.triggered, gammas)
    v1 = np.empty(len(gammas))
    v2 = np.empty(len(gammas))
    for i, x in enumerate(xs):
        v1[i], v2[i] = _v_pair_at_level(split, spec, utility, float(x))
    return v1, v2


def _check_monotone(v1, v2):
    scale = max(np.abs(v1).max(), np.abs(v2).max(), 1e-300)
    slack = 1e-12 * scale
    if np.any(np.diff(v1) > slack) or np.any(np.diff(v2) < -slack):
        raise MonotonicityError(
            "monotonicity violated: V1 must decrease and V2 increase in gamma "
            "(check utility concavity)")


def solve_gamma_star(split: TriggeredSplit, spec: ContractSpec,
                     utility: UtilityContext, *, grid_size: int = 200,
                     restrict: tuple[float, float] | None = None,
                     rho_indemnity: float | None = None,
                     tol_bracket: float = 1e-10,
                     tol_residual: float = 1e-10) -> WeightingSolution:
    """Boundary checks plus bisection on V1 - V2, end to end.

    When both boundary conditions hold, bisection over gamma drives
    |V1 - V2| below tol_residual*(V1+V2) or the gamma bracket below
    tol_bracket, whichever binds last; alpha* follows from the exact
    level-to-weighting inverse. A violated bound defers to
    violated_boundary_decision (or, under a restricted level interval, to
    the matching endpoint).
    """
    g_lo, g_hi = (1e-9, 1.0 - 1e-9) if restrict is None else restrict
    if not (0.0 < g_lo < g_hi < 1.0):
        raise ValueError("restriction must satisfy 0 < lo < hi < 1")
    gammas = np.linspace(g_lo, g_hi, grid_size)
    v1_trace, v2_trace = _trace(split, spec, utility, gammas)
    _check_monotone(v1_trace, v2_trace)
    trace = {"gamma": gammas, "v1": v1_trace, "v2": v2_trace}

    if restrict is None:
        lower, upper, _ = check_bounds(split, spec, utility)
    else:
        x_lo = expectile(split.triggered, g_lo)
        x_hi = expectile(split.triggered, g_hi)
        lower, upper, _ = check_bounds(split, spec, utility, x_low=x_lo, x_high=x_hi)

    if lower and upper:
        a, b = g_lo, g_hi
        resid = None
        while b - a > tol_bracket:
            mid = 0.5 * (a + b)
            v1m, v2m = v1_v2(split, spec, utility, Level(mid))
            resid = abs(v1m - v2m)
            if resid <= tol_residual * (abs(v1m) + abs(v2m)):
                a = b = mid
                break
            if v1m > v2m:
                a = mid
            else:
                b = mid
        g_star = 0.5 * (a + b)
        v1s, v2s = v1_v2(split, spec, utility, Level(g_star))
        return WeightingSolution(
            gamma_star=g_star, alpha_star=alpha_from_gamma(Level(g_star)).alpha,
            lower_bound_holds=True, upper_bound_holds=True,
            decision=Decision.INTERIOR_OPTIMUM, residual=abs(v1s - v2s), trace=trace)

    if lower and not upper and restrict is not None:
        return WeightingSolution(
            gamma_star=g_hi, alpha_star=alpha_from_gamma(Level(g_hi)).alpha,
            lower_bound_holds=lower, upper_bound_holds=upper,
            decision=Decision.ENDPOINT_HIGH, trace=trace)
    if not lower and restrict is not None:
        return WeightingSolution(
            gamma_star=g_lo, alpha_star=alpha_from_gamma(Level(g_lo)).alpha,
            lower_bound_holds=lower, upper_bound_holds=upper,
            decision=Decision.ENDPOINT_LOW, trace=trace)

    decision = violated_boundary_decision(
        split, spec, utility,
        rho_indemnity=spec.rho if rho_indemnity is None else rho_indemnity)
    return WeightingSolution(
        gamma_star=None, alpha_star=None, lower_bound_holds=lower,
        upper_bound_holds=upper, decision=decision, trace=trace)


def _constant_payout_premium(spec: ContractSpec, p: float, y: float) -> float:
    """Premium of the payout y*1_trigger under the spec's principle."""
    if spec.principle is PremiumPrinciple.EXPECTED_VALUE:
        return (1.0 + spec.rho) * p * y
    if spec.principle is PremiumPrinciple.STD_DEV:
        return p * y + spec.rho * abs(y) * math.sqrt(p * (1.0 - p))
    return p * y + spec.rho * y * y * p * (1.0 - p)


def expected_utility_constant_payout(split: TriggeredSplit, spec: ContractSpec,
                                     utility: UtilityContext, y: float) -> float:
    """E[u(w0 - S + y*1_T - pi_y)] for a constant-on-trigger payout y."""
    pi = _constant_payout_premium(spec, split.p, y)
    w0 = utility.w0
    ut = _wmean(split.triggered, utility.u(w0 - split.triggered.values + y - pi))
    uu = _wmean(split.untriggered, utility.u(w0 - split.untriggered.values - pi))
    return split.p * ut + (1.0 - split.p) * uu


def violated_boundary_decision(split: TriggeredSplit, spec: ContractSpec,
                               utility: UtilityContext,
                               rho_indemnity: float) -> Decision:
    """Insurance choice when exactly one boundary condition fails.

    Lower bound violated: expected utility is decreasing in gamma, so compare
    the gamma -> 0 limit (payout at the triggered minimum) against no
    insurance, short-circuiting with the sufficient no-insurance condition.
    Upper bound violated: expected utility is increasing, so check the
    principle-specific sufficient condition for preferring full indemnity
    coverage with loading rho_indemnity.
    """
    lower, upper, _ = check_bounds(split, spec, utility)
    if lower and upper:
        raise ValueError("both boundary conditions hold; no fallback needed")
    if not lower and not upper:
        raise RuntimeError("internal inconsistency: both bounds reported violated")
    w0 = utility.w0
    if not lower:
        v0_num = _wmean(split.triggered, utility.u_prime(w0 - split.triggered.values))
        v0_den = _wmean(split.untriggered, utility.u_prime(w0 - split.untriggered.values))
        v0 = v0_num / v0_den
        if spec.principle is PremiumPrinciple.VARIANCE:
            threshold = 1.0
        else:
            c = _premium_multiplier(spec, split.p)
            threshold = (1.0 - split.p) * c / (split.p * (1.0 - c))
        if v0 <= threshold:
            return Decision.PREFER_NO_INSURANCE
        u_limit = expected_utility_constant_payout(split, spec, utility,
                                                   split.triggered.min)
        u_none = expected_utility_constant_payout(split, spec, utility, 0.0)
        return (Decision.PREFER_SMALLEST_ALPHA if u_limit > u_none
                else Decision.PREFER_NO_INSURANCE)
    # upper violated
    ess_sup = split.triggered.max
    ratio = rho_indemnity / spec.rho
    p = split.p
    if spec.principle is PremiumPrinciple.EXPECTED_VALUE:
        prefers = ess_sup > ratio * split.mean_loss() / p
    elif spec.principle is PremiumPrinciple.STD_DEV:
        prefers = ess_sup > ratio ** 2 * split.var_loss() / (p * (1.0 - p))
    else:
        prefers = ess_sup ** 2 > ratio * split.var_loss() / (p * (1.0 - p))
    return Decision.PREFER_INDEMNITY if prefers else Decision.PREFER_LARGEST_ALPHA


def closed_form_exponential(split: TriggeredSplit, spec: ContractSpec, beta: float):
    """Optimal weighting under exponential utility + expected-value principle.

    x_exp is the optimal triggered payout level; the level gamma* follows by
    inverting the expectile first-order condition on the triggered empirical
    distribution, and alpha* by the exact level-to-weighting inverse.
    Independent of initial wealth by construction. Returns
    (alpha_star, gamma_star, x_exp).
    """
    if spec.principle is not PremiumPrinciple.EXPECTED_VALUE:
        raise ValueError("closed form requires the expected-value principle")
    if beta <= 0:
        raise ValueError("beta must be positive")
    p = split.p
    c = (1.0 + spec.rho) * p
    if c >= 1.0:
        raise PremiumDominatesError("premium dominates payout (c >= 1)")
    mgf_t = _wmean(split.triggered, np.exp(beta * split.triggered.values))
    mgf_u = _wmean(split.untriggered, np.exp(beta * split.untriggered.values))
    x_exp = -(1.0 / beta) * (math.log(c / (1.0 - c))
                             + math.log(((1.0 - p) * mgf_u) / (p * mgf_t)))
    st = split.triggered
    if not (st.min < x_exp < st.max):
        raise ValueError("bounds violated: optimal level outside the triggered support")
    l_val = st.partial_mean(x_exp)
    f_val = st.cdf(x_exp)
    num = l_val - x_exp * f_val
    gamma_star = num / (2.0 * num + x_exp - st.mean)
    alpha_star = alpha_from_gamma(Level(gamma_star)).alpha
    return alpha_star, gamma_star, x_exp


def utility_curve(sample: LossIndexSample, spec: ContractSpec,
                  utility: UtilityContext, gamma_grid, conditioner=None) -> np.ndarray:
    """Empirical expected sub-utilities over a level grid.

    Returns an array with columns (gamma, U1, U2, U) where U1/U2 average the
    utility of terminal wealth over triggered/untriggered scenarios and
    U = U1 + U2. Pure parametric payouts by default; passing a conditioner
    switches to the index-conditional scheme.
    """
    gammas = np.asarray(gamma_grid, dtype=np.float64)
    if np.any((gammas <= 0) | (gammas >= 1)):
        raise ValueError("gamma grid must lie strictly inside (0,1)")
    mask = spec.in_trigger(sample.indices)
    w0 = utility.w0
    out = np.empty((gammas.size, 4))
    for i, g in enumerate(gammas):
        if conditioner is None:
            payout = pure_parametric_payout(sample, spec, Level(float(g)))
        else:
            payout = index_payout(sample, spec, Level(float(g)), conditioner)
        pi = premium(payout, spec)
        wealth = w0 - sample.losses + payout.payments - pi
        uvals = np.asarray(utility.u(wealth), dtype=np.float64)
        u1 = float(np.mean(np.where(mask, uvals, 0.0)))
        u2 = float(np.mean(np.where(mask, 0.0, uvals)))
        out[i] = (g, u1, u2, u1 + u2)
    return out
