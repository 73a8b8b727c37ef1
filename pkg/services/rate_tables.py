"""Vectorized positive-part rate terms for many (threshold, power) pairs at once.

For a main law with survival S_k and an eavesdropper CDF F_e, with
w(x) = P / (1 + x P):

    C(a, P) = (1/ln2) int_0^a F_e(x) w(x) dx = E[{log2((1 + aP)/(1 + gamma_e P))}^+]
    D(a, P) = (1/ln2) int_0^a F_e(x) w(x) S_k(x) dx

and the interval term of the upper bounds is

    T(lo, hi, P) = S_k(lo) C(lo) + D(hi) - D(lo) - S_k(hi) C(hi).

Both integrals are taken on s in [0, 1] with x = expm1(s L) / P, L = log1p(aP),
so one ``quad_vec`` call serves every pair.
"""
from __future__ import annotations

import logging
import math
import time
from typing import Optional

import numpy as np
from scipy import integrate

from models.gain_distribution import GainDistribution
from models.specs import QuadratureSpec
from services.quadrature import LN2, discrete_pos_part_sum, support_points

_CHUNK_CELLS = 2_000_000


class PositivePartTable:
    """Batch evaluator of lower-bound and interval terms for one (main, eve) pair."""

    def __init__(
        self,
        main: GainDistribution,
        eve: GainDistribution,
        spec: Optional[QuadratureSpec] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.main = main
        self.eve = eve
        self.spec = spec or QuadratureSpec()
        self._logger = (logger or logging.getLogger("secrecy")).getChild(self.__class__.__name__.lower())
        self._sampled = main.is_discrete or eve.is_discrete
        self._eve_support: Optional[tuple[np.ndarray, np.ndarray]] = None
        self._main_support: Optional[tuple[np.ndarray, np.ndarray]] = None

    # ------------------------------------------------------------- masses
    def masses(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Pr[lo <= gamma_k < hi] elementwise."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        below_hi = np.where(np.isinf(hi), 1.0, self.main.mass_below(np.where(np.isinf(hi), 0.0, hi)))
        return np.clip(below_hi - self.main.mass_below(lo), 0.0, 1.0)

    # ------------------------------------------------------------- supports
    @property
    def eve_support(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eve_support is None:
            self._eve_support = support_points(self.eve, self.spec.empirical_grid)
        return self._eve_support

    @property
    def main_support(self) -> tuple[np.ndarray, np.ndarray]:
        if self._main_support is None:
            self._main_support = support_points(self.main, self.spec.empirical_grid)
        return self._main_support

    # ------------------------------------------------------------- quad_vec
    def _breakpoints(self, lengths: np.ndarray, scale: np.ndarray, with_survival: bool) -> Optional[list[float]]:
        """Quantile knots of the laws mapped to s = log1p(P x) / L, pooled by median over the batch."""
        knots = self.eve.quantile_breakpoints(0.0, math.inf)
        if with_survival:
            knots = knots + self.main.quantile_breakpoints(0.0, math.inf)
        if not knots:
            return None
        x = np.asarray(sorted(set(knots)), dtype=float)
        s = np.log1p(x[:, None] * scale[None, :]) / lengths[None, :]
        pooled = np.median(s, axis=1)
        inside = sorted({round(float(v), 12) for v in pooled if 0.0 < v < 1.0})
        return inside or None

    def _integrate(self, top: np.ndarray, power: np.ndarray, with_survival: bool) -> np.ndarray:
        """C (or D when ``with_survival``) for continuous laws, elementwise in (top, P)."""
        top = np.asarray(top, dtype=float)
        power = np.asarray(power, dtype=float)
        span = np.where((power > 0) & (top > 0), np.log1p(top * power), 0.0)
        active = span > 0
        result = np.zeros_like(span)
        if not np.any(active):
            return result
        lengths = span[active]
        scale = power[active]

        def integrand(s: float) -> np.ndarray:
            x = np.expm1(s * lengths) / scale
            value = np.asarray(self.eve.cdf(x), dtype=float)
            if with_survival:
                value = value * np.asarray(self.main.sf(x), dtype=float)
            return value

        started = time.perf_counter()
        values, error, info = integrate.quad_vec(
            integrand,
            0.0,
            1.0,
            epsabs=self.spec.abs_tol,
            epsrel=self.spec.rel_tol,
            norm="max",
            limit=self.spec.max_subdivisions,
            points=self._breakpoints(lengths, scale, with_survival),
            full_output=True,
        )
        if info.status != 0:
            self._logger.debug(
                "Vector quadrature did not converge",
                extra={"status": info.status, "abserr": float(error), "size": int(lengths.size)},
            )
        self._logger.debug(
            "Vector quadrature completed",
            extra={
                "size": int(lengths.size),
                "survival": with_survival,
                "duration_ms": round((time.perf_counter() - started) * 1000, 3),
            },
        )
        result[active] = np.maximum(values * lengths / LN2, 0.0)
        return result

    # ------------------------------------------------------------- public
    def lower_terms(self, thresholds: np.ndarray, powers: np.ndarray) -> np.ndarray:
        """E[{log2((1 + tau P)/(1 + gamma_e P))}^+] for each (tau, P) pair."""
        thresholds, powers = np.broadcast_arrays(np.asarray(thresholds, dtype=float), np.asarray(powers, dtype=float))
        if self.eve.is_discrete:
            x, v = self.eve_support
            return self._chunked_discrete(thresholds[:, None], np.ones((thresholds.size, 1)), powers, x, v)
        return self._integrate(thresholds, powers, with_survival=False)

    def interval_terms(self, lo: np.ndarray, hi: np.ndarray, powers: np.ndarray) -> np.ndarray:
        """E[{log2((1 + gamma_k P)/(1 + gamma_e P))}^+ ; lo <= gamma_k < hi] for each triple."""
        lo, hi, powers = np.broadcast_arrays(
            np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), np.asarray(powers, dtype=float)
        )
        lo, hi, powers = lo.ravel(), hi.ravel(), powers.ravel()
        if self._sampled:
            return self._sampled_interval_terms(lo, hi, powers)
        # beyond the main law's tail cut S_k is negligible, so D saturates there
        cap = self.main.truncation_point(self.spec.tail_truncation_mass)
        finite_hi = np.where(np.isinf(hi), cap, hi)
        lo_clipped = np.minimum(lo, finite_hi)
        n = lo.size
        tops = np.concatenate([lo_clipped, finite_hi])
        both = np.concatenate([powers, powers])
        c_values = self._integrate(tops, both, with_survival=False)
        d_values = self._integrate(tops, both, with_survival=True)
        c_lo, c_hi = c_values[:n], c_values[n:]
        d_lo, d_hi = d_values[:n], d_values[n:]
        sf_lo = np.asarray(self.main.sf(lo), dtype=float)
        sf_hi = np.where(np.isinf(hi), 0.0, self.main.sf(np.where(np.isinf(hi), 0.0, hi)))
        terms = sf_lo * c_lo + d_hi - d_lo - sf_hi * c_hi
        return np.where((powers > 0) & (hi > lo), np.maximum(terms, 0.0), 0.0)

    def _sampled_interval_terms(self, lo: np.ndarray, hi: np.ndarray, powers: np.ndarray) -> np.ndarray:
        x, v = self.eve_support
        if self.main.is_discrete:
            y_atoms, u_atoms = self.main_support
            inside = (y_atoms[None, :] >= lo[:, None]) & (y_atoms[None, :] < hi[:, None])
            y = np.broadcast_to(y_atoms, inside.shape)
            u = np.where(inside, u_atoms[None, :], 0.0)
        else:
            grid = self.spec.empirical_grid
            f_lo = np.asarray(self.main.mass_below(lo), dtype=float)
            f_hi = np.where(np.isinf(hi), 1.0, self.main.mass_below(np.where(np.isinf(hi), 0.0, hi)))
            mass = np.clip(f_hi - f_lo, 0.0, 1.0)
            levels = f_lo[:, None] + (np.arange(grid)[None, :] + 0.5) / grid * mass[:, None]
            y = np.asarray(self.main.ppf(levels), dtype=float)
            u = np.broadcast_to((mass / grid)[:, None], y.shape)
        return self._chunked_discrete(y, u, powers, x, v)

    def _chunked_discrete(
        self, y: np.ndarray, u: np.ndarray, powers: np.ndarray, x: np.ndarray, v: np.ndarray
    ) -> np.ndarray:
        rows = y.shape[0]
        width = max(y.shape[1], x.size, 1)
        step = max(1, _CHUNK_CELLS // width)
        out = np.empty(rows)
        for start in range(0, rows, step):
            stop = min(rows, start + step)
            out[start:stop] = discrete_pos_part_sum(
                np.ascontiguousarray(y[start:stop]),
                np.ascontiguousarray(u[start:stop]),
                x,
                v,
                powers[start:stop],
            )
        return np.where(powers > 0, out, 0.0)


__all__ = ["PositivePartTable"]
