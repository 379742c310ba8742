"""Self-commissioning anomaly threshold.

During a fitting window the residual variance is tracked with Welford's
recursion and the threshold follows ``T = s^2 * chi2_alpha(1)``. After the
window the estimator freezes and flags squared errors strictly above ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

FITTING, FROZEN = "fitting", "frozen"


class ThresholdStateError(RuntimeError):
    """Operation not allowed in the estimator's current state."""


class InsufficientDataError(ThresholdStateError):
    pass


def _chi2_1_cdf(q: float) -> float:
    return math.erf(math.sqrt(q / 2.0)) if q > 0 else 0.0


def _bisect_chi2_1(alpha: float, tol: float = 1e-13) -> float:
    lo, hi = 0.0, 1.0
    while _chi2_1_cdf(hi) < alpha:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _chi2_1_cdf(mid) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def chi2_quantile(alpha: float, k: int = 1) -> float:
    """Value q with P(chi2_k <= q) = alpha. Only k = 1 is supported.

    Uses q = z^2 with z the standard-normal quantile at (1 + alpha) / 2, and
    falls back to bisection on the CDF where that quantile loses precision
    (alpha extremely close to 1).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if k != 1:
        raise NotImplementedError("only one degree of freedom is supported")
    p = (1.0 + alpha) / 2.0
    if p < 1.0 - 1e-12:
        return NormalDist().inv_cdf(p) ** 2
    return _bisect_chi2_1(alpha)


@dataclass
class ThresholdEstimator:
    alpha: float = 0.99
    fit_duration: int = 1440  # samples; 4 h at 10 s
    n: int = 0
    mean: float = 0.0
    s: float = 0.0  # running sum of squared deviations
    state: str = FITTING
    threshold: float = math.inf

    def __post_init__(self) -> None:
        self._q = chi2_quantile(self.alpha)

    @property
    def variance(self) -> float | None:
        return self.s / (self.n - 1) if self.n >= 2 else None

    @property
    def frozen(self) -> bool:
        return self.state == FROZEN

    def update(self, r: float) -> None:
        """Fold one residual into the running statistics and refresh T."""
        if self.frozen:
            raise ThresholdStateError("estimator is frozen; residual updates are rejected")
        self.n += 1
        delta = r - self.mean
        self.mean += delta / self.n
        self.s += delta * (r - self.mean)
        var = self.variance
        self.threshold = math.inf if var is None else var * self._q

    def freeze(self) -> None:
        if self.n < 2:
            raise InsufficientDataError("need at least two residuals to freeze the threshold")
        self.state = FROZEN

    def observe(self, r: float) -> None:
        """Update while fitting and freeze once ``fit_duration`` residuals are in."""
        if self.frozen:
            return
        self.update(r)
        if self.n >= self.fit_duration:
            self.freeze()

    def classify(self, squared_error: float) -> bool:
        """True (positive) iff frozen and the squared error exceeds T."""
        return self.frozen and squared_error > self.threshold

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "s": self.s,
            "alpha": self.alpha,
            "fit_duration": self.fit_duration,
            "state": self.state,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdEstimator":
        if d["state"] not in (FITTING, FROZEN):
            raise ValueError(f"unknown estimator state {d['state']!r}")
        return cls(
            alpha=d["alpha"],
            fit_duration=d["fit_duration"],
            n=d["n"],
            mean=d["mean"],
            s=d["s"],
            state=d["state"],
            threshold=d["threshold"],
        )
