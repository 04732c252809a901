"""Optimal basis-risk weighting for parametric index insurance.

Separable conditional expectiles decompose as e_gamma(S|theta) =
h1(theta)*H2(gamma) + H3(theta) with h1 > 0 and H2 strictly increasing;
this module estimates the decomposition from a conditional-expectile
surface (rank-1 least squares on the centered surface), builds the moment
functionals entering the index-contract first-order system, and solves for
the optimal level under the expected-value and variance premium principles.
The standard-deviation principle does not admit the same monotone structure
and is rejected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .contracts import ContractSpec, LossIndexSample, PremiumPrinciple
from .expectile import Level, alpha_from_gamma
from .weighting_pure import Decision, UtilityContext, WeightingSolution

logger = logging.getLogger(__name__)

__all__ = [
    "SeparabilityError",
    "SeparableDecomposition",
    "IndexQuantities",
    "build_surface",
    "decompose",
    "index_quantities",
    "solve_gamma_star_index",
    "violated_boundary_decision_index",
]


class SeparabilityError(ValueError):
    """Conditional expectile surface is not rank-1 after centering."""

    def __init__(self, message, residual=None, residual_map=None):
        super().__init__(message)
        self.residual = residual
        self.residual_map = residual_map


class UnsupportedPrincipleError(ValueError):
    """Premium principle not covered by the index-insurance theory."""


@dataclass
class SeparableDecomposition:
    """Fitted e_gamma(S|theta) = h1(theta)H2(gamma) + H3(theta).

    thetas are the bin centers (or analytic evaluation points); h1 is
    normalized to 1 at the reference bin. h2_eval, when present, evaluates
    H2 exactly from the underlying conditioner instead of interpolating the
    grid; h2_unbounded flags H2(1) = +inf (conditional losses with
    unbounded essential supremum).
    """

    thetas: np.ndarray
    h1: np.ndarray
    h3: np.ndarray
    gammas: np.ndarray
    h2_grid: np.ndarray
    residual: float
    ref_index: int
    h2_unbounded: bool = False
    h2_eval: object = None

    @property
    def h2_0(self) -> float:
        return self.eval_h2(1e-9)

    @property
    def h2_1(self) -> float:
        if self.h2_unbounded:
            return np.inf
        return self.eval_h2(1.0 - 1e-9)

    def eval_h2(self, gamma: float) -> float:
        if self.h2_eval is not None:
            return float(self.h2_eval(float(gamma)))
        g = min(max(float(gamma), self.gammas[0]), self.gammas[-1])
        return float(np.interp(g, self.gammas, self.h2_grid))

    def eval_theta(self, thetas):
        """(h1, H3) at arbitrary index values, linear between bin centers."""
        t = np.asarray(thetas, dtype=np.float64)
        return (np.interp(t, self.thetas, self.h1),
                np.interp(t, self.thetas, self.h3))


def build_surface(conditioner, thetas, gammas) -> np.ndarray:
    """Conditional-expectile surface, shape (len(thetas), len(gammas))."""
    thetas = np.asarray(thetas, dtype=np.float64)
    gammas = np.asarray(gammas, dtype=np.float64)
    out = np.empty((thetas.size, gammas.size))
    for j, g in enumerate(gammas):
        out[:, j] = conditioner.conditional_expectile(thetas, Level(float(g)))
    return out


def decompose(surface, gammas, thetas, *, tolerance: float = 1e-2,
              conditioner=None, h2_unbounded: bool = False) -> SeparableDecomposition:
    """Rank-1 fit of a conditional-expectile surface.

    H3 is pinned to the gamma = 1/2 column (the conditional mean, which
    makes H2(1/2) = 0 canonical); h1 and H2 come from the leading singular
    pair of the centered surface, normalized to h1 = 1 at the bin with the
    largest leverage. A max relative residual above ``tolerance`` raises
    SeparabilityError carrying the residual map. Passing the conditioner
    attaches an exact H2 evaluator (needed for tight agreement with the
    pure-parametric solver under degenerate conditioning).
    """
    surface = np.asarray(surface, dtype=np.float64)
    gammas = np.asarray(gammas, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    if surface.shape != (thetas.size, gammas.size):
        raise ValueError("surface shape must be (n_theta, n_gamma)")
    if gammas.size < 3 or thetas.size < 2:
        raise ValueError("need at least 3 gamma points and 2 theta bins")
    if np.any(np.diff(gammas) <= 0) or np.any(np.diff(thetas) <= 0):
        raise ValueError("gamma and theta grids must be strictly increasing")
    i_half = int(np.argmin(np.abs(gammas - 0.5)))
    if abs(gammas[i_half] - 0.5) > 1e-9:
        raise ValueError("gamma grid must contain 1/2 (pins H3 to the conditional mean)")
    h3 = surface[:, i_half].copy()
    centered = surface - h3[:, None]

    u_mat, s, vt = np.linalg.svd(centered, full_matrices=False)
    u0 = u_mat[:, 0]
    ref = int(np.argmax(np.abs(u0)))
    h1 = u0 / u0[ref]
    h2_grid = s[0] * vt[0, :] * u0[ref]
    if h2_grid[-1] < h2_grid[0]:
        h1, h2_grid = -h1, -h2_grid

    recon = h3[:, None] + np.outer(h1, h2_grid)
    scale = max(float(np.abs(centered).max()), 1e-300)
    residual_map = np.abs(surface - recon) / scale
    residual = float(residual_map.max())
    if residual > tolerance:
        raise SeparabilityError(
            f"separability violated: max relative residual {residual:.3e} "
            f"> {tolerance:.1e}", residual=residual, residual_map=residual_map)
    if np.any(h1 <= 0):
        raise SeparabilityError("separability violated: fitted h1 not strictly positive",
                                residual=residual, residual_map=residual_map)
    if np.any(np.diff(h2_grid) <= 0):
        raise SeparabilityError("separability violated: fitted H2 not strictly increasing",
                                residual=residual, residual_map=residual_map)

    h2_eval = None
    if conditioner is not None:
        theta_ref = float(thetas[ref])
        h3_ref = float(h3[ref])

        def h2_eval(g, _c=conditioner, _t=theta_ref, _h3=h3_ref):
            val = _c.conditional_expectile(np.array([_t]), Level(float(g)))
            return float(val[0]) - _h3

    return SeparableDecomposition(
        thetas=thetas, h1=h1, h3=h3, gammas=gammas, h2_grid=h2_grid,
        residual=residual, ref_index=ref, h2_unbounded=h2_unbounded,
        h2_eval=h2_eval)


@dataclass(frozen=True)
class IndexQuantities:
    """Moment functionals of the separable decomposition over the index law."""

    p_trigger: float
    int_h1: float          # E[h1(tau) 1_T]
    int_h3: float          # E[H3(tau) 1_T]
    v1: float              # Var(h1(tau) 1_T)
    v3: float              # Var(H3(tau) 1_T)
    v13: float             # Cov(h1(tau) 1_T, H3(tau) 1_T)
    b_e: float             # expected-value boundary threshold
    rho: float

    def r_tilde(self, k: float) -> float:
        return 2.0 * self.rho * k * self.v1 + 2.0 * self.rho * self.v13 + self.int_h1

    def pi_v(self, k: float) -> float:
        return (self.int_h1 * k + self.int_h3
                + self.rho * (k * k * self.v1 + 2.0 * k * self.v13 + self.v3))

    def pi_e(self, k: float) -> float:
        return (1.0 + self.rho) * (self.int_h1 * k + self.int_h3)


def index_quantities(decomp: SeparableDecomposition, sample: LossIndexSample,
                     spec: ContractSpec) -> IndexQuantities:
    """Empirical moments of h1(tau)1_T and H3(tau)1_T over the index sample."""
    mask = spec.in_trigger(sample.indices)
    p = float(mask.mean())
    if not (0.0 < p < 1.0):
        raise ValueError("degenerate trigger")
    h1_all, h3_all = decomp.eval_theta(sample.indices)
    h1_ind = np.where(mask, h1_all, 0.0)
    h3_ind = np.where(mask, h3_all, 0.0)
    int_h1 = float(h1_ind.mean())
    int_h3 = float(h3_ind.mean())
    v1 = float(h1_ind.var())
    v3 = float(h3_ind.var())
    v13 = float(np.mean(h1_ind * h3_ind) - int_h1 * int_h3)
    b_e = (1.0 + spec.rho) * (1.0 - p) / p * int_h1
    return IndexQuantities(p_trigger=p, int_h1=int_h1, int_h3=int_h3,
                           v1=v1, v3=v3, v13=v13, b_e=b_e, rho=spec.rho)


def _v_pair_index(sample, spec, utility, decomp, quants, k):
    """(V1, V2) of the index first-order system at payout scale k = H2(gamma)."""
    mask = spec.in_trigger(sample.indices)
    w0 = utility.w0
    s = sample.losses
    h1_all, h3_all = decomp.eval_theta(sample.indices)
    p, iq = quants.p_trigger, quants
    if spec.principle is PremiumPrinciple.EXPECTED_VALUE:
        d1 = h1_all - (1.0 + spec.rho) * iq.int_h1
        d3 = h3_all - (1.0 + spec.rho) * iq.int_h3
        wt = w0 - s + d1 * k + d3
        v1 = float(np.mean(np.where(mask, d1, 0.0)
                           * np.where(mask, utility.u_prime(np.where(mask, wt, w0)), 0.0)))
        pi = iq.pi_e(k)
        wu = w0 - s - pi
        v2 = ((1.0 + spec.rho) * iq.int_h1
              * float(np.mean(np.where(mask, 0.0,
                                       utility.u_prime(np.where(mask, w0, wu))))))
        return v1, v2
    if spec.principle is PremiumPrinciple.VARIANCE:
        r = iq.r_tilde(k)
        pi = iq.pi_v(k)
        wt = w0 - s + h1_all * k + h3_all - pi
        v1 = float(np.mean(np.where(mask, h1_all - r, 0.0)
                           * np.where(mask, utility.u_prime(np.where(mask, wt, w0)), 0.0)))
        wu = w0 - s - pi
        v2 = r * float(np.mean(np.where(mask, 0.0,
                                        utility.u_prime(np.where(mask, w0, wu)))))
        return v1, v2
    raise UnsupportedPrincipleError(
        "standard-deviation principle is not supported for index insurance")


def check_bounds_index(sample, spec, utility, decomp, quants, n_scan: int = 50):
    """Boundary conditions of the index existence theorem, on the k scale.

    Lower bound at k = H2(0+); upper bound by scanning k over
    (H2(0), H2(1)) with log spacing toward the supremum. An unbounded H2(1)
    truncates the scan at the largest grid value (reported in witnesses).
    """
    k0 = decomp.h2_0
    k1 = decomp.h2_1
    truncated = not np.isfinite(k1)
    if truncated:
        k1 = float(decomp.h2_grid[-1])
    v1, v2 = _v_pair_index(sample, spec, utility, decomp, quants, k0)
    lower = v1 > v2
    witnesses = {"lower_k": k0, "lower_v1": v1, "lower_v2": v2,
                 "upper_scan_truncated": truncated}
    ts = np.linspace(0.0, 9.0, n_scan)
    ks = np.append(k1 - (k1 - k0) * 10.0 ** (-ts), k1)
    upper = False
    for k in ks:
        v1k, v2k = _v_pair_index(sample, spec, utility, decomp, quants, float(k))
        if v1k < v2k:
            upper = True
            witnesses["upper_k"] = float(k)
            break
    return lower, upper, witnesses


def solve_gamma_star_index(sample: LossIndexSample, spec: ContractSpec,
                           utility: UtilityContext, decomp: SeparableDecomposition,
                           *, grid_size: int = 200,
                           rho_indemnity: float | None = None,
                           tol_bracket: float = 1e-10,
                           tol_residual: float = 1e-10) -> WeightingSolution:
    """Bisection on the index first-order system V1(H2(gamma)) = V2(H2(gamma)).

    Supported principles: expected value and variance. Monotonicity of the
    traces is asserted on a gamma grid before solving; violated bounds defer
    to violated_boundary_decision_index.
    """
    if spec.principle is PremiumPrinciple.STD_DEV:
        raise UnsupportedPrincipleError(
            "standard-deviation principle is not supported for index insurance")
    quants = index_quantities(decomp, sample, spec)
    g_lo, g_hi = 1e-9, 1.0 - 1e-9
    gammas = np.linspace(g_lo, g_hi, grid_size)
    v1_trace = np.empty(grid_size)
    v2_trace = np.empty(grid_size)
    for i, g in enumerate(gammas):
        v1_trace[i], v2_trace[i] = _v_pair_index(
            sample, spec, utility, decomp, quants, decomp.eval_h2(float(g)))
    scale = max(np.abs(v1_trace).max(), np.abs(v2_trace).max(), 1e-300)
    slack = 1e-12 * scale
    if np.any(np.diff(v1_trace) > slack) or np.any(np.diff(v2_trace) < -slack):
        raise RuntimeError("monotonicity violated: index V1/V2 traces not monotone")
    trace = {"gamma": gammas, "v1": v1_trace, "v2": v2_trace}

    lower, upper, _ = check_bounds_index(sample, spec, utility, decomp, quants)
    if lower and upper:
        a, b = g_lo, g_hi
        while b - a > tol_bracket:
            mid = 0.5 * (a + b)
            v1m, v2m = _v_pair_index(sample, spec, utility, decomp, quants,
                                     decomp.eval_h2(mid))
            if abs(v1m - v2m) <= tol_residual * (abs(v1m) + abs(v2m)):
                a = b = mid
                break
            if v1m > v2m:
                a = mid
            else:
                b = mid
        g_star = 0.5 * (a + b)
        v1s, v2s = _v_pair_index(sample, spec, utility, decomp, quants,
                                 decomp.eval_h2(g_star))
        return WeightingSolution(
            gamma_star=g_star, alpha_star=alpha_from_gamma(Level(g_star)).alpha,
            lower_bound_holds=True, upper_bound_holds=True,
            decision=Decision.INTERIOR_OPTIMUM, residual=abs(v1s - v2s), trace=trace)

    decision = violated_boundary_decision_index(
        sample, spec, utility, decomp,
        rho_indemnity=spec.rho if rho_indemnity is None else rho_indemnity)
    return WeightingSolution(
        gamma_star=None, alpha_star=None, lower_bound_holds=lower,
        upper_bound_holds=upper, decision=decision, trace=trace)


def _per_bin_extrema(sample: LossIndexSample, spec: ContractSpec,
                     decomp: SeparableDecomposition):
    """Per-bin min/max of triggered losses, bins = nearest decomposition center."""
    mask = spec.in_trigger(sample.indices)
    th = sample.indices[mask]
    ls = sample.losses[mask]
    edges = 0.5 * (decomp.thetas[:-1] + decomp.thetas[1:])
    bins = np.searchsorted(edges, th, side="right")
    mins = np.full(decomp.thetas.size, np.nan)
    maxs = np.full(decomp.thetas.size, np.nan)
    for b in range(decomp.thetas.size):
        sel = bins == b
        if sel.any():
            mins[b] = ls[sel].min()
            maxs[b] = ls[sel].max()
    return mins, maxs


def violated_boundary_decision_index(sample: LossIndexSample, spec: ContractSpec,
                                     utility: UtilityContext,
                                     decomp: SeparableDecomposition,
                                     rho_indemnity: float) -> Decision:
    """Insurance choice when an index-contract boundary condition fails.

    Lower bound violated: if the per-bin essential infimum of triggered
    losses is (numerically) zero almost everywhere, no insurance strictly
    dominates; otherwise fall back to the smallest admissible weighting.
    Upper bound violated: principle-specific sufficient conditions for full
    indemnity coverage with loading rho_indemnity, using per-bin empirical
    essential suprema (an unbounded H2(1) short-circuits to indemnity).
    """
    quants = index_quantities(decomp, sample, spec)
    lower, upper, _ = check_bounds_index(sample, spec, utility, decomp, quants)
    if lower and upper:
        raise ValueError("both boundary conditions hold; no fallback needed")
    if not lower and not upper:
        raise RuntimeError("internal inconsistency: both bounds reported violated")
    mask = spec.in_trigger(sample.indices)
    p = quants.p_trigger
    if not lower:
        mins, _ = _per_bin_extrema(sample, spec, decomp)
        observed = mins[~np.isnan(mins)]
        tol = 1e-9 * max(float(sample.losses.max()), 1.0)
        if observed.size and np.all(observed <= tol):
            return Decision.PREFER_NO_INSURANCE
        return Decision.PREFER_SMALLEST_ALPHA
    # upper violated
    if decomp.h2_unbounded:
        return Decision.PREFER_INDEMNITY
    _, maxs = _per_bin_extrema(sample, spec, decomp)
    edges = 0.5 * (decomp.thetas[:-1] + decomp.thetas[1:])
    bins_all = np.searchsorted(edges, sample.indices, side="right")
    sup_all = maxs[bins_all]
    sup_ind = np.where(mask & np.isfinite(sup_all), sup_all, 0.0)
    ratio = rho_indemnity / spec.rho
    if spec.principle is PremiumPrinciple.EXPECTED_VALUE:
        e_sup_cond = float(sup_ind.mean()) / p
        prefers = e_sup_cond > ratio * float(sample.losses.mean()) / p
    else:
        prefers = float(sup_ind.var()) > ratio * float(sample.losses.var())
    return Decision.PREFER_INDEMNITY if prefers else Decision.PREFER_LARGEST_ALPHA
