"""Scalar expectations over channel-gain laws computed by adaptive quadrature.

Every rate is in bits. Positive-part integrands are rewritten with integration
by parts so that only CDFs and survival functions are integrated, and the
abscissa is mapped through ``u = log1p(x P)`` which keeps the integrand smooth
at high SNR. Sampled (empirical) laws are averaged directly; a continuous law
paired with a sampled one is discretized on ``QuadratureSpec.empirical_grid``
equal-mass cells.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from models.gain_distribution import GainDistribution
from models.specs import QuadratureSpec

LN2 = math.log(2.0)


class InvalidIntervalError(ValueError):
    """Raised when an interval has lo > hi or a negative lower edge."""


class DegenerateConditioningError(ValueError):
    """Raised when conditioning on an event with zero probability."""


@dataclass(frozen=True)
class Interval:
    """Half-open gain interval [lo, hi)."""

    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self) -> None:
        _check_interval(self.lo, self.hi)


def _check_interval(lo: float, hi: float) -> None:
    if math.isnan(lo) or math.isnan(hi) or lo < 0 or lo > hi:
        raise InvalidIntervalError(f"invalid interval [{lo}, {hi})")


def interval_mass(dist: GainDistribution, lo: float, hi: float) -> float:
    """Pr[lo <= gamma < hi]."""
    _check_interval(lo, hi)
    below_hi = 1.0 if math.isinf(hi) else float(dist.mass_below(hi))
    mass = below_hi - float(dist.mass_below(lo))
    return min(1.0, max(0.0, mass))


def support_points(dist: GainDistribution, grid: int, lo: float = 0.0, hi: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
    """Atoms and unnormalized weights representing ``dist`` on [lo, hi).

    Sampled laws with more distinct values than ``grid`` are compressed to
    ``grid`` equal-mass quantile points.
    """
    if dist.is_discrete:
        values, weights = dist.atoms()
        if values.size > grid:
            levels = (np.arange(grid) + 0.5) / grid
            values = np.asarray(dist.ppf(levels), dtype=float)
            weights = np.full(grid, 1.0 / grid)
        keep = (values >= lo) & (values < hi)
        return values[keep], weights[keep]
    return dist.discretize(lo, hi, grid)


def discrete_pos_part_sum(
    y: np.ndarray,
    u: np.ndarray,
    x: np.ndarray,
    v: np.ndarray,
    power: np.ndarray,
) -> np.ndarray:
    """Row sums of u * E_x[{log2((1 + y P) / (1 + x P))}^+] for a discrete x law.

    ``y`` and ``u`` have shape (n, g), ``power`` has shape (n,), and ``x``/``v``
    are the sorted eavesdropper atoms and weights. Returns shape (n,).
    """
    order = np.argsort(x, kind="stable")
    x = x[order]
    v = v[order]
    power = np.asarray(power, dtype=float).reshape(-1, 1)
    log_x = np.log1p(x[None, :] * power)
    below_weight = np.concatenate(([0.0], np.cumsum(v)))
    below_log = np.concatenate((np.zeros((power.shape[0], 1)), np.cumsum(v[None, :] * log_x, axis=1)), axis=1)
    index = np.searchsorted(x, y, side="left")
    gain = below_weight[index] * np.log1p(y * power) - np.take_along_axis(below_log, index, axis=1)
    return np.sum(u * np.maximum(gain, 0.0), axis=1) / LN2


class ChannelIntegrator:
    """Expectations of log-ratio rates under the quadrature tolerances of a run."""

    def __init__(self, spec: Optional[QuadratureSpec] = None, logger: Optional[logging.Logger] = None) -> None:
        self.spec = spec or QuadratureSpec()
        self._logger = (logger or logging.getLogger("secrecy")).getChild(self.__class__.__name__.lower())

    # ------------------------------------------------------------------ helpers
    def quad(self, fn: Callable[[float], float], a: float, b: float, points: list[float] | None = None) -> float:
        if b <= a:
            return 0.0
        inner = sorted({p for p in (points or []) if a < p < b})
        result = integrate.quad(
            fn,
            a,
            b,
            epsabs=self.spec.abs_tol,
            epsrel=self.spec.rel_tol,
            limit=self.spec.max_subdivisions,
            points=inner or None,
            full_output=1,
        )
        if len(result) > 3:
            self._logger.debug(
                "Quadrature reported a warning",
                extra={"interval": (a, b), "abserr": result[1], "message": str(result[3])[:200]},
            )
        return float(result[0])

    def truncation(self, dist: GainDistribution) -> float:
        return dist.truncation_point(self.spec.tail_truncation_mass)

    def _log_breakpoints(self, dist: GainDistribution, power: float, lo: float, hi: float) -> list[float]:
        return [math.log1p(x * power) for x in dist.quantile_breakpoints(lo, hi)]

    # ---------------------------------------------------------------- masses
    def interval_mass(self, dist: GainDistribution, lo: float, hi: float) -> float:
        return interval_mass(dist, lo, hi)

    # ------------------------------------------------------- eavesdropper-only
    def pos_part_log_ratio_expectation(self, eve: GainDistribution, tau: float, power: float) -> float:
        """E[{log2((1 + tau P) / (1 + gamma_e P))}^+]."""
        if tau < 0 or power < 0:
            raise ValueError("tau and P must be nonnegative")
        if tau == 0 or power == 0:
            return 0.0
        if eve.is_discrete:
            x, v = support_points(eve, self.spec.empirical_grid)
            return float(discrete_pos_part_sum(np.array([[tau]]), np.ones((1, 1)), x, v, np.array([power]))[0])
        upper = math.log1p(tau * power)
        value = self.quad(
            lambda u: float(eve.cdf(math.expm1(u) / power)),
            0.0,
            upper,
            self._log_breakpoints(eve, power, 0.0, tau),
        )
        return max(0.0, value / LN2)

    # ------------------------------------------------------------- nested
    def pos_part_interval_term(
        self,
        main: GainDistribution,
        eve: GainDistribution,
        lo: float,
        hi: float,
        power: float,
    ) -> float:
        """E[{log2((1 + gamma_k P) / (1 + gamma_e P))}^+ ; lo <= gamma_k < hi] (unnormalized)."""
        _check_interval(lo, hi)
        if power < 0:
            raise ValueError("P must be nonnegative")
        if power == 0 or hi == lo:
            return 0.0
        if main.is_discrete or eve.is_discrete:
            grid = self.spec.empirical_grid
            y, u = support_points(main, grid, lo, hi)
            if y.size == 0:
                return 0.0
            x, v = support_points(eve, grid)
            return float(discrete_pos_part_sum(y[None, :], u[None, :], x, v, np.array([power]))[0])
        top = min(hi, self.truncation(main))
        if top <= 0:
            return 0.0
        sf_hi = 0.0 if math.isinf(hi) else float(main.sf(hi))

        def integrand(u: float) -> float:
            x = math.expm1(u) / power
            return float(eve.cdf(x)) * (float(main.sf(max(x, lo))) - sf_hi)

        points = self._log_breakpoints(eve, power, 0.0, top) + self._log_breakpoints(main, power, 0.0, top)
        points.append(math.log1p(lo * power))
        value = self.quad(integrand, 0.0, math.log1p(top * power), points)
        return max(0.0, value / LN2)

    def conditional_pos_part_expectation(
        self,
        main: GainDistribution,
        eve: GainDistribution,
        lo: float,
        hi: float,
        power: float,
    ) -> float:
        """E[{log2((1 + gamma_k P) / (1 + gamma_e P))}^+ | lo <= gamma_k < hi]."""
        mass = interval_mass(main, lo, hi)
        if mass <= 0.0:
            raise DegenerateConditioningError(f"Pr[{lo} <= gamma < {hi}] is zero")
        return self.pos_part_interval_term(main, eve, lo, hi, power) / mass

    # -------------------------------------------------------------- log1p
    def partial_log1p_expectation(self, dist: GainDistribution, power: float, lo: float = 0.0, hi: float = math.inf) -> float:
        """E[log2(1 + P gamma) ; lo <= gamma < hi] (unnormalized)."""
        _check_interval(lo, hi)
        if power < 0:
            raise ValueError("P must be nonnegative")
        if power == 0 or hi == lo:
            return 0.0
        if dist.is_discrete:
            values, weights = dist.atoms()
            keep = (values >= lo) & (values < hi)
            return float(np.dot(weights[keep], np.log1p(power * values[keep])) / LN2)
        top = min(hi, self.truncation(dist))
        if top <= lo:
            return 0.0
        # integration by parts: S(lo) log(1+P lo) - S(hi) log(1+P hi) + int S d log(1+P x)
        boundary = float(dist.sf(lo)) * math.log1p(power * lo)
        if math.isfinite(hi):
            boundary -= float(dist.sf(hi)) * math.log1p(power * hi)
        value = self.quad(
            lambda u: float(dist.sf(math.expm1(u) / power)),
            math.log1p(lo * power),
            math.log1p(top * power),
            self._log_breakpoints(dist, power, lo, top),
        )
        return max(0.0, (boundary + value) / LN2)

    def log1p_expectation(self, dist: GainDistribution, power: float, condition: Optional[Interval] = None) -> float:
        """E[log2(1 + P gamma) | condition]; unconditioned when ``condition`` is None."""
        condition = condition or Interval()
        mass = interval_mass(dist, condition.lo, condition.hi)
        if mass <= 0.0:
            raise DegenerateConditioningError(f"Pr[{condition.lo} <= gamma < {condition.hi}] is zero")
        if power == 0:
            return 0.0
        return self.partial_log1p_expectation(dist, power, condition.lo, condition.hi) / mass

    # ------------------------------------------------------------- high SNR
    def pos_part_log_threshold_ratio(self, eve: GainDistribution, tau: float) -> float:
        """E[{log2(tau / gamma_e)}^+], the P -> infinity limit of the lower-bound term."""
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        if tau == 0:
            return 0.0
        if eve.is_discrete:
            values, weights = eve.atoms()
            keep = values < tau
            if np.any(values[keep] <= 0):
                return math.inf
            return float(np.dot(weights[keep], np.log2(tau / values[keep])))
        floor = float(eve.ppf(self.spec.tail_truncation_mass))
        if floor <= 0:
            return math.inf
        if floor >= tau:
            return 0.0
        # x = tau exp(-t): int_0^tau F(x)/x dx = int_0^inf F(tau e^-t) dt
        t_max = math.log(tau / floor)
        value = self.quad(lambda t: float(eve.cdf(tau * math.exp(-t))), 0.0, t_max,
                           [math.log(tau / q) for q in eve.quantile_breakpoints(floor, tau)])
        return max(0.0, value / LN2)

    def pos_part_log_gain_ratio(self, main: GainDistribution, eve: GainDistribution) -> float:
        """E[{log2(gamma_k / gamma_e)}^+] for independent gains."""
        if main.is_discrete or eve.is_discrete:
            grid = self.spec.empirical_grid
            y, u = support_points(main, grid)
            x, v = support_points(eve, grid)
            if np.any(x[v > 0] <= 0) and np.any(y[u > 0] > 0):
                return math.inf
            ratio = np.log2(np.maximum(y[:, None], 1e-300) / np.maximum(x[None, :], 1e-300))
            return float(np.sum(u[:, None] * v[None, :] * np.maximum(ratio, 0.0)))
        floor = float(eve.ppf(self.spec.tail_truncation_mass))
        top = self.truncation(main)
        if floor <= 0:
            return math.inf
        if top <= floor:
            return 0.0
        # int_0^inf F_e(x)/x S_k(x) dx with x = e^s
        points = [math.log(q) for q in eve.quantile_breakpoints(floor, top) + main.quantile_breakpoints(floor, top)]
        value = self.quad(
            lambda s: float(eve.cdf(math.exp(s))) * float(main.sf(math.exp(s))),
            math.log(floor),
            math.log(top),
            points,
        )
        return max(0.0, value / LN2)

    def partial_log_expectation(self, dist: GainDistribution, lo: float = 0.0, hi: float = math.inf) -> float:
        """E[log2(gamma) ; lo <= gamma < hi] (unnormalized, may be negative)."""
        _check_interval(lo, hi)
        if dist.is_discrete:
            values, weights = dist.atoms()
            keep = (values >= lo) & (values < hi) & (weights > 0)
            if np.any(values[keep] <= 0):
                return -math.inf
            return float(np.dot(weights[keep], np.log2(values[keep])))
        u_lo = float(dist.mass_below(lo))
        u_hi = 1.0 if math.isinf(hi) else float(dist.mass_below(hi))
        if u_hi <= u_lo:
            return 0.0
        edge = self.spec.tail_truncation_mass
        a, b = max(u_lo, edge), min(u_hi, 1.0 - edge)
        points = [lvl for lvl in (1e-6, 1e-3, 0.05, 0.5, 0.95, 0.999) if a < lvl < b]
        value = self.quad(lambda q: math.log2(float(dist.ppf(q))), a, b, points)
        return value


__all__ = [
    "ChannelIntegrator",
    "DegenerateConditioningError",
    "Interval",
    "InvalidIntervalError",
    "LN2",
    "discrete_pos_part_sum",
    "interval_mass",
    "support_points",
]
