"""Payment schemes, premium principles, basis-risk metrics, and fitting.

Implements the two admissible payout families (constant-on-trigger and
index-conditional expectile schemes), the expected-value / standard-deviation
/ variance premium principles, and golden-section fitting of capped linear
payment schemes under either a basis-risk or a pure-utility criterion.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .expectile import (
    BasisRiskWeight,
    EmpiricalSample,
    Level,
    expectile,
    expectile_exponential,
)

logger = logging.getLogger(__name__)

__all__ = [
    "PayoutFamily",
    "PremiumPrinciple",
    "ContractSpec",
    "PayoutVector",
    "LossIndexSample",
    "DegenerateTriggerError",
    "split_by_trigger",
    "pure_parametric_payout",
    "index_payout",
    "premium",
    "basis_risk",
    "asymmetric_objective",
    "fit_piecewise_linear",
    "ExponentialConditioner",
    "AnalyticConditioner",
    "EmpiricalBinConditioner",
]


class DegenerateTriggerError(ValueError):
    """Trigger fires for all or none of the observations."""


class InsufficientConditionalDataError(ValueError):
    """A conditioning bin holds fewer observations than required."""


class PayoutFamily(enum.Enum):
    PURE_PARAMETRIC = "pure"
    INDEX_PARAMETRIC = "index"
    PIECEWISE_LINEAR = "piecewise_linear"


class PremiumPrinciple(enum.Enum):
    EXPECTED_VALUE = "expected_value"
    STD_DEV = "std_dev"
    VARIANCE = "variance"


@dataclass(frozen=True)
class ContractSpec:
    """Trigger interval, payout family, premium principle, and building value.

    The trigger is the half-open wind-speed interval [t_lo, t_hi); t_hi
    defaults to +inf. attachment/cap only matter for piecewise-linear
    schemes (defaults: attachment = t_lo, cap = building value).
    """

    t_lo: float
    t_hi: float = math.inf
    payout_family: PayoutFamily = PayoutFamily.PURE_PARAMETRIC
    principle: PremiumPrinciple = PremiumPrinciple.EXPECTED_VALUE
    rho: float = 0.2
    building_value: float = 100.0
    attachment: float | None = None
    cap: float | None = None

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("loading rho must be positive")
        if self.building_value <= 0:
            raise ValueError("building value must be positive")
        if self.t_lo >= self.t_hi:
            raise ValueError("trigger interval must be non-empty")
        att = self.t_lo if self.attachment is None else self.attachment
        cap = self.building_value if self.cap is None else self.cap
        if cap <= 0:
            raise ValueError("cap must be a positive payout level")
        object.__setattr__(self, "attachment", att)
        object.__setattr__(self, "cap", cap)

    def in_trigger(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.float64)
        return (indices >= self.t_lo) & (indices < self.t_hi)


class LossIndexSample:
    """Aligned loss/index observations (S_i, theta_i)."""

    __slots__ = ("losses", "indices")

    def __init__(self, losses, indices):
        losses = np.asarray(losses, dtype=np.float64)
        indices = np.asarray(indices, dtype=np.float64)
        if losses.shape != indices.shape or losses.ndim != 1 or losses.size == 0:
            raise ValueError("losses and indices must be equal-length non-empty 1d arrays")
        if not (np.all(np.isfinite(losses)) and np.all(np.isfinite(indices))):
            raise ValueError("observations must be finite")
        if np.any(losses < 0):
            raise ValueError("losses must be non-negative")
        self.losses = losses
        self.indices = indices
        losses.setflags(write=False)
        indices.setflags(write=False)

    def __len__(self):
        return self.losses.size

    def to_csv(self, path):
        """Emit `loss,index` CSV (RFC-4180, LF endings)."""
        with open(path, "w", newline="") as fh:
            fh.write("loss,index\n")
            for s, t in zip(self.losses, self.indices):
                fh.write(f"{float(s)!r},{float(t)!r}\n")

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        data = np.atleast_2d(data)
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class PayoutVector:
    """Payments aligned index-wise with a LossIndexSample; zero off trigger."""

    payments: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.payments, dtype=np.float64)
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("payments must be finite and non-negative")
        p.setflags(write=False)
        object.__setattr__(self, "payments", p)


def split_by_trigger(sample: LossIndexSample, spec: ContractSpec):
    """Partition observations into triggered / untriggered parts.

    Raises DegenerateTriggerError when either part is empty (the empirical
    trigger probability must lie strictly inside (0,1)).
    """
    mask = spec.in_trigger(sample.indices)
    if mask.all() or not mask.any():
        raise DegenerateTriggerError("degenerate trigger")
    triggered = LossIndexSample(sample.losses[mask], sample.indices[mask])
    untriggered = LossIndexSample(sample.losses[~mask], sample.indices[~mask])
    return triggered, untriggered


def pure_parametric_payout(sample: LossIndexSample, spec: ContractSpec,
                           gamma: Level | float) -> PayoutVector:
    """Constant payout e_gamma(S | trigger) on triggered rows, 0 elsewhere."""
    triggered, _ = split_by_trigger(sample, spec)
    level = expectile(EmpiricalSample(triggered.losses), gamma)
    mask = spec.in_trigger(sample.indices)
    return PayoutVector(np.where(mask, level, 0.0))


class ExponentialConditioner:
    """Analytic conditioner for exponentially distributed conditional losses.

    mean_fn maps index values to the conditional mean; conditional expectiles
    come from the Lambert-W closed form.
    """

    def __init__(self, mean_fn):
        self.mean_fn = mean_fn

    def conditional_expectile(self, thetas, gamma):
        thetas = np.asarray(thetas, dtype=np.float64)
        means = np.asarray(self.mean_fn(thetas), dtype=np.float64)
        g = gamma.gamma if isinstance(gamma, Level) else Level(gamma).gamma
        unit = expectile_exponential(1.0, g)
        return means * unit


class AnalyticConditioner:
    """Conditioner wrapping a vectorized callable (thetas, gamma) -> expectiles."""

    def __init__(self, fn):
        self.fn = fn

    def conditional_expectile(self, thetas, gamma):
        g = gamma.gamma if isinstance(gamma, Level) else Level(gamma).gamma
        return np.asarray(self.fn(np.asarray(thetas, dtype=np.float64), g), dtype=np.float64)


class EmpiricalBinConditioner:
    """Equal-frequency binning estimator of e_gamma(S | theta) on the trigger.

    Bins the triggered index values into n_bins equal-frequency bins (each
    with at least min_bin_count observations) and uses the within-bin
    empirical expectile as a piecewise-constant conditional model.
    """

    def __init__(self, triggered: LossIndexSample, n_bins: int = 20,
                 min_bin_count: int = 200):
        n = len(triggered)
        if n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        counts = np.diff(np.linspace(0, n, n_bins + 1).astype(int))
        if counts.min() < min_bin_count:
            raise InsufficientConditionalDataError(
                f"insufficient conditional data: smallest bin has {counts.min()} "
                f"< {min_bin_count} observations")
        order = np.argsort(triggered.indices, kind="stable")
        idx_sorted = triggered.indices[order]
        loss_sorted = triggered.losses[order]
        edges_pos = np.linspace(0, n, n_bins + 1).astype(int)
        self.bin_samples = []
        self.bin_centers = np.empty(n_bins)
        inner_edges = []
        for b in range(n_bins):
            lo, hi = edges_pos[b], edges_pos[b + 1]
            self.bin_samples.append(EmpiricalSample(loss_sorted[lo:hi]))
            self.bin_centers[b] = idx_sorted[lo:hi].mean()
            if b > 0:
                inner_edges.append(0.5 * (idx_sorted[lo - 1] + idx_sorted[lo]))
        self.inner_edges = np.asarray(inner_edges)
        self.n_bins = n_bins

    def assign(self, thetas) -> np.ndarray:
        return np.searchsorted(self.inner_edges, np.asarray(thetas, dtype=np.float64),
                               side="right")

    def conditional_expectile(self, thetas, gamma):
        g = gamma.gamma if isinstance(gamma, Level) else Level(gamma).gamma
        bins = self.assign(thetas)
        per_bin = np.array([expectile(s, g) for s in self.bin_samples])
        return per_bin[bins]


def index_payout(sample: LossIndexSample, spec: ContractSpec,
                 gamma: Level | float, conditioner) -> PayoutVector:
    """Payout e_gamma(S | theta_i) on triggered rows, 0 elsewhere."""
    mask = spec.in_trigger(sample.indices)
    if mask.all() or not mask.any():
        raise DegenerateTriggerError("degenerate trigger")
    payments = np.zeros(len(sample))
    payments[mask] = np.maximum(
        conditioner.conditional_expectile(sample.indices[mask], gamma), 0.0)
    return PayoutVector(payments)


def premium(payout: PayoutVector, spec: ContractSpec) -> float:
    """Premium of a payout distribution under the spec's principle.

    Standard deviation / variance use population (1/N) statistics: premiums
    are functionals of the modeled distribution, not inferential estimates.
    """
    y = payout.payments
    m = float(y.mean())
    if spec.principle is PremiumPrinciple.EXPECTED_VALUE:
        return (1.0 + spec.rho) * m
    if spec.principle is PremiumPrinciple.STD_DEV:
        return m + spec.rho * float(y.std())
    return m + spec.rho * float(y.var())


def basis_risk(losses, payout: PayoutVector) -> np.ndarray:
    """Elementwise B = Y - S (positive = overcompensation)."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != payout.payments.shape:
        raise ValueError("losses and payments must align")
    return payout.payments - losses


def asymmetric_objective(losses, payout: PayoutVector,
                         alpha: BasisRiskWeight | float) -> float:
    """Mean of alpha^2 (S-Y)+^2 + (1-alpha)^2 (S-Y)-^2."""
    a = alpha.alpha if isinstance(alpha, BasisRiskWeight) else BasisRiskWeight(alpha).alpha
    diff = np.asarray(losses, dtype=np.float64) - payout.payments
    pos = np.clip(diff, 0.0, None)
    neg = np.clip(-diff, 0.0, None)
    return float(np.mean((a * pos) ** 2 + ((1.0 - a) * neg) ** 2))


@dataclass(frozen=True)
class BasisRiskOptimal:
    """Fit criterion: asymmetric square loss at level gamma_star."""

    gamma_star: float


@dataclass(frozen=True)
class PureUtility:
    """Fit criterion: expected utility of terminal wealth, E-principle premium."""

    utility: object  # UtilityContext
    w0: float | None = None


@dataclass(frozen=True)
class PiecewiseLinearFit:
    slope: float
    objective: float
    at_lower_boundary: bool
    used_grid_fallback: bool


def _pwl_scheme(thetas, slope, attachment, cap):
    return np.minimum(np.maximum(0.0, slope * (thetas - attachment)), cap)


def fit_piecewise_linear(sample: LossIndexSample, spec: ContractSpec,
                         mode) -> PiecewiseLinearFit:
    """Fit the slope of a capped linear payment scheme.

    Golden-section search on (0, lambda_max], with lambda_max the slope at
    which the scheme saturates at the largest observed index. A non-unimodal
    coarse profile triggers a dense grid scan with a warning.
    """
    thetas = sample.indices
    losses = sample.losses
    att, cap = spec.attachment, spec.cap
    theta_max = float(thetas.max())
    if theta_max <= att:
        raise ValueError("no observations beyond the attachment point")
    lam_max = cap / (theta_max - att)

    if isinstance(mode, BasisRiskOptimal):
        g = mode.gamma_star
        if not (0.0 < g < 1.0):
            raise ValueError("gamma_star must lie in (0,1)")

        def objective(lam):
            diff = losses - _pwl_scheme(thetas, lam, att, cap)
            pos = np.clip(diff, 0.0, None)
            neg = np.clip(-diff, 0.0, None)
            return float(np.mean(g * pos ** 2 + (1.0 - g) * neg ** 2))
    elif isinstance(mode, PureUtility):
        util = mode.utility
        w0 = util.w0 if mode.w0 is None else mode.w0

        def objective(lam):
            y = _pwl_scheme(thetas, lam, att, cap)
            pi = (1.0 + spec.rho) * y.mean()
            return -float(np.mean(util.u(w0 - losses + y - pi)))
    else:
        raise TypeError(f"unknown fit mode {mode!r}")

    # coarse profile for unimodality / bracketing
    n_coarse = 64
    lams = np.linspace(lam_max / n_coarse, lam_max, n_coarse)
    vals = np.array([objective(l) for l in lams])
    best = int(np.argmin(vals))
    slack = 1e-12 * (abs(vals).max() + 1.0)
    interior_minima = [i for i in range(1, n_coarse - 1)
                       if vals[i] < vals[i - 1] - slack and vals[i] < vals[i + 1] - slack]
    used_grid = False
    if len(interior_minima) > 1:
        logger.warning("non-unimodal slope profile; falling back to dense grid scan")
        dense = np.linspace(lam_max / 4096, lam_max, 4096)
        dvals = np.array([objective(l) for l in dense])
        b = int(np.argmin(dvals))
        slope, obj = float(dense[b]), float(dvals[b])
        used_grid = True
    else:
        lo = lams[max(best - 1, 0)] if best > 0 else 1e-12 * lam_max
        hi = lams[min(best + 1, n_coarse - 1)]
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = objective(c), objective(d)
        while b - a > 1e-10 * lam_max:
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = objective(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = objective(d)
        slope = 0.5 * (a + b)
        obj = objective(slope)
    at_lower = slope <= 2.0 * lam_max / n_coarse
    if at_lower:
        logger.warning("fitted slope at lower boundary (near-zero payouts)")
    return PiecewiseLinearFit(slope=float(slope), objective=float(obj),
                              at_lower_boundary=bool(at_lower),
                              used_grid_fallback=used_grid)
