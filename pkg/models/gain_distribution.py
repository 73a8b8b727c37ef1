"""Nonnegative channel-gain laws (gamma = |h|^2) and the laws derived from them."""
from __future__ import annotations

import hashlib
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, stats

ArrayLike = float | np.ndarray

# quantile levels handed to the integrator as breakpoints; they keep sharply
# peaked laws (the max of many receivers) from slipping between nodes
BREAKPOINT_LEVELS = (1e-6, 1e-3, 0.05, 0.25, 0.5, 0.75, 0.95, 0.999, 1.0 - 1e-6)


class GainDistribution(ABC):
    """A law on [0, inf) exposing density, CDF, inverse CDF, mean and sampling."""

    is_discrete: bool = False

    @abstractmethod
    def cdf(self, x: ArrayLike) -> ArrayLike:
        """Pr[gamma <= x]."""

    @abstractmethod
    def pdf(self, x: ArrayLike) -> ArrayLike:
        ...

    @abstractmethod
    def ppf(self, u: ArrayLike) -> ArrayLike:
        ...

    @abstractmethod
    def mean(self) -> float:
        ...

    @abstractmethod
    def to_dict(self) -> dict[str, Any]:
        ...

    def sf(self, x: ArrayLike) -> ArrayLike:
        return 1.0 - self.cdf(x)

    def logcdf(self, x: ArrayLike) -> ArrayLike:
        with np.errstate(divide="ignore"):
            return np.log(self.cdf(x))

    def mass_below(self, x: ArrayLike) -> ArrayLike:
        """Pr[gamma < x]; equals the CDF for continuous laws."""
        return self.cdf(x)

    def isf(self, p: ArrayLike) -> ArrayLike:
        return self.ppf(1.0 - np.asarray(p, dtype=float))

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        return np.asarray(self.ppf(rng.random(size)), dtype=float)

    def truncation_point(self, tail_mass: float) -> float:
        """Abscissa beyond which at most ``tail_mass`` probability remains."""
        return float(self.isf(tail_mass))

    def quantile_breakpoints(self, lo: float, hi: float) -> list[float]:
        if self.is_discrete:
            return []
        with np.errstate(divide="ignore", invalid="ignore"):
            levels = np.asarray(self.ppf(np.asarray(BREAKPOINT_LEVELS)), dtype=float)
        return sorted({float(v) for v in levels if np.isfinite(v) and lo < v < hi})

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        raise TypeError(f"{type(self).__name__} is continuous and has no atoms")

    def discretize(self, lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Support points and weights of the law restricted to [lo, hi).

        Weights are unnormalized (they sum to the interval mass). Continuous
        laws use ``n`` equal-mass cells represented by their median points.
        """
        if self.is_discrete:
            values, weights = self.atoms()
            keep = (values >= lo) & (values < hi)
            return values[keep], weights[keep]
        f_lo = float(self.mass_below(lo))
        f_hi = float(self.mass_below(hi)) if math.isfinite(hi) else 1.0
        mass = f_hi - f_lo
        if mass <= 0.0:
            return np.empty(0), np.empty(0)
        levels = f_lo + (np.arange(n) + 0.5) / n * mass
        return np.asarray(self.ppf(levels), dtype=float), np.full(n, mass / n)


class _ScipyBackedGain(GainDistribution):
    """Shared plumbing for laws that delegate to a frozen ``scipy.stats`` object."""

    @property
    @abstractmethod
    def _rv(self) -> Any:
        ...

    def cdf(self, x: ArrayLike) -> ArrayLike:
        return self._rv.cdf(x)

    def sf(self, x: ArrayLike) -> ArrayLike:
        return self._rv.sf(x)

    def logcdf(self, x: ArrayLike) -> ArrayLike:
        return self._rv.logcdf(x)

    def pdf(self, x: ArrayLike) -> ArrayLike:
        return self._rv.pdf(x)

    def ppf(self, u: ArrayLike) -> ArrayLike:
        return self._rv.ppf(u)

    def isf(self, p: ArrayLike) -> ArrayLike:
        return self._rv.isf(p)

    def mean(self) -> float:
        return float(self._rv.mean())

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        return np.asarray(self._rv.rvs(size=size, random_state=rng), dtype=float)


@dataclass(frozen=True)
class ExponentialGain(_ScipyBackedGain):
    """Rayleigh fading power gain: gamma ~ Exp(mean), i.e. h ~ CN(0, mean)."""

    mean_gain: float = 1.0

    def __post_init__(self) -> None:
        if not self.mean_gain > 0:
            raise ValueError("exponential mean must be positive")

    @cached_property
    def _rv(self) -> Any:
        return stats.expon(scale=self.mean_gain)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "exponential", "mean": self.mean_gain}


@dataclass(frozen=True)
class GammaGain(_ScipyBackedGain):
    """Erlang/Gamma law: the sum of ``shape`` iid exponential gains."""

    shape: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("gamma shape and scale must be positive")

    @cached_property
    def _rv(self) -> Any:
        return stats.gamma(a=self.shape, scale=self.scale)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "gamma", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class EmpiricalGain(GainDistribution):
    """Step-CDF law over observed gains; sampling is with replacement."""

    samples: np.ndarray = field(repr=False)
    digest: str = field(init=False)

    is_discrete = True

    def __post_init__(self) -> None:
        values = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if values.size == 0:
            raise ValueError("empirical law needs at least one sample")
        if not np.all(np.isfinite(values)) or values[0] < 0:
            raise ValueError("empirical samples must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "samples", values)
        object.__setattr__(self, "digest", hashlib.sha1(values.tobytes()).hexdigest())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EmpiricalGain) and other.digest == self.digest

    def __hash__(self) -> int:
        return hash(("empirical", self.digest))

    @property
    def size(self) -> int:
        return int(self.samples.size)

    @cached_property
    def _atoms(self) -> tuple[np.ndarray, np.ndarray]:
        values, counts = np.unique(self.samples, return_counts=True)
        return values, counts / self.size

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self._atoms

    def cdf(self, x: ArrayLike) -> ArrayLike:
        return np.searchsorted(self.samples, x, side="right") / self.size

    def mass_below(self, x: ArrayLike) -> ArrayLike:
        return np.searchsorted(self.samples, x, side="left") / self.size

    def pdf(self, x: ArrayLike) -> ArrayLike:
        raise TypeError("empirical laws have no density; expectations use sample averaging")

    def ppf(self, u: ArrayLike) -> ArrayLike:
        index = np.clip(np.ceil(np.asarray(u, dtype=float) * self.size).astype(int) - 1, 0, self.size - 1)
        return self.samples[index]

    def isf(self, p: ArrayLike) -> ArrayLike:
        p = np.asarray(p, dtype=float)
        result = self.ppf(1.0 - p)
        return np.where(p <= 0.0, self.samples[-1], result)

    def mean(self) -> float:
        return float(self.samples.mean())

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        return rng.choice(self.samples, size=size, replace=True)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "empirical", "samples": [float(v) for v in self.samples]}


@dataclass(frozen=True)
class CustomGain(GainDistribution):
    """User-supplied density/CDF callbacks; quantiles and mean are solved numerically."""

    density: Callable[[ArrayLike], ArrayLike]
    distribution: Callable[[ArrayLike], ArrayLike]
    quantile: Optional[Callable[[ArrayLike], ArrayLike]] = None
    mean_value: Optional[float] = None
    name: str = "custom"

    def cdf(self, x: ArrayLike) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, 0.0, self.distribution(np.maximum(x, 0.0)))

    def pdf(self, x: ArrayLike) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        return np.where(x < 0.0, 0.0, self.density(np.maximum(x, 0.0)))

    def ppf(self, u: ArrayLike) -> ArrayLike:
        if self.quantile is not None:
            return self.quantile(u)
        return np.vectorize(self._solve_quantile, otypes=[float])(u)

    def _solve_quantile(self, u: float) -> float:
        if u <= 0.0:
            return 0.0
        if u >= 1.0:
            return math.inf
        upper = 1.0
        while float(self.cdf(upper)) < u:
            upper *= 2.0
            if upper > 1e300:
                return math.inf
        return float(optimize.brentq(lambda x: float(self.cdf(x)) - u, 0.0, upper, xtol=1e-14, rtol=1e-12))

    def mean(self) -> float:
        if self.mean_value is not None:
            return float(self.mean_value)
        upper = self.truncation_point(1e-14)
        value, _ = integrate.quad(lambda x: float(self.sf(x)), 0.0, upper, limit=200,
                                  points=self.quantile_breakpoints(0.0, upper) or None)
        return float(value)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "custom", "name": self.name}


@dataclass(frozen=True)
class MaxOrderStatistic(GainDistribution):
    """Law of the largest of ``K`` iid draws from ``base``."""

    base: GainDistribution
    K: int

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be a positive integer")

    @property
    def is_discrete(self) -> bool:  # type: ignore[override]
        return self.base.is_discrete

    def cdf(self, x: ArrayLike) -> ArrayLike:
        if self.K == 1:
            return self.base.cdf(x)
        with np.errstate(divide="ignore"):
            return np.exp(self.K * self.base.logcdf(x))

    def logcdf(self, x: ArrayLike) -> ArrayLike:
        return self.K * self.base.logcdf(x)

    def sf(self, x: ArrayLike) -> ArrayLike:
        if self.K == 1:
            return self.base.sf(x)
        with np.errstate(divide="ignore"):
            return -np.expm1(self.K * self.base.logcdf(x))

    def mass_below(self, x: ArrayLike) -> ArrayLike:
        return np.asarray(self.base.mass_below(x), dtype=float) ** self.K

    def pdf(self, x: ArrayLike) -> ArrayLike:
        if self.K == 1:
            return self.base.pdf(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            spread = np.exp((self.K - 1) * self.base.logcdf(x))
        return self.K * np.nan_to_num(spread) * self.base.pdf(x)

    def ppf(self, u: ArrayLike) -> ArrayLike:
        if self.K == 1:
            return self.base.ppf(u)
        with np.errstate(divide="ignore"):
            return self.base.isf(-np.expm1(np.log(np.asarray(u, dtype=float)) / self.K))

    def isf(self, p: ArrayLike) -> ArrayLike:
        if self.K == 1:
            return self.base.isf(p)
        with np.errstate(divide="ignore"):
            return self.base.isf(-np.expm1(np.log1p(-np.asarray(p, dtype=float)) / self.K))

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        values, _ = self.base.atoms()
        upper = np.asarray(self.base.cdf(values), dtype=float) ** self.K
        lower = np.asarray(self.base.mass_below(values), dtype=float) ** self.K
        return values, upper - lower

    def mean(self) -> float:
        if self.is_discrete:
            values, weights = self.atoms()
            return float(np.dot(values, weights))
        upper = self.truncation_point(1e-15)
        value, _ = integrate.quad(lambda x: float(self.sf(x)), 0.0, upper, limit=200,
                                  points=self.quantile_breakpoints(0.0, upper) or None)
        return float(value)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "max", "K": self.K, "base": self.base.to_dict()}


@dataclass(frozen=True)
class MaxOfIndependent(GainDistribution):
    """Law of the largest of independent, not necessarily identical, gains."""

    laws: tuple[GainDistribution, ...]

    def __post_init__(self) -> None:
        if not self.laws:
            raise ValueError("at least one law is required")
        kinds = {law.is_discrete for law in self.laws}
        if len(kinds) != 1:
            raise ValueError("cannot mix sampled and continuous laws in a maximum")

    @property
    def is_discrete(self) -> bool:  # type: ignore[override]
        return self.laws[0].is_discrete

    def logcdf(self, x: ArrayLike) -> ArrayLike:
        return sum(law.logcdf(x) for law in self.laws)

    def cdf(self, x: ArrayLike) -> ArrayLike:
        with np.errstate(divide="ignore"):
            return np.exp(self.logcdf(x))

    def sf(self, x: ArrayLike) -> ArrayLike:
        with np.errstate(divide="ignore"):
            return -np.expm1(self.logcdf(x))

    def mass_below(self, x: ArrayLike) -> ArrayLike:
        result = np.ones_like(np.asarray(x, dtype=float))
        for law in self.laws:
            result = result * law.mass_below(x)
        return result

    def pdf(self, x: ArrayLike) -> ArrayLike:
        cdfs = [np.asarray(law.cdf(x), dtype=float) for law in self.laws]
        total = np.zeros_like(np.asarray(x, dtype=float))
        for index, law in enumerate(self.laws):
            others = np.ones_like(total)
            for other_index, other in enumerate(cdfs):
                if other_index != index:
                    others = others * other
            total = total + np.asarray(law.pdf(x), dtype=float) * others
        return total

    def ppf(self, u: ArrayLike) -> ArrayLike:
        return np.vectorize(self._solve_quantile, otypes=[float])(u)

    def isf(self, p: ArrayLike) -> ArrayLike:
        return np.vectorize(self._solve_upper_quantile, otypes=[float])(p)

    def _bracket(self, tail: float) -> float:
        return max(float(law.isf(tail)) for law in self.laws)

    def _solve_quantile(self, u: float) -> float:
        if u <= 0.0:
            return 0.0
        if u >= 1.0:
            return math.inf
        return self._solve_upper_quantile(1.0 - u)

    def _solve_upper_quantile(self, p: float) -> float:
        if p >= 1.0:
            return 0.0
        if p <= 0.0:
            return math.inf
        upper = self._bracket(min(p, 0.5) / len(self.laws))
        target = math.log(p)

        def gap(x: float) -> float:
            with np.errstate(divide="ignore"):
                return float(np.log(self.sf(x))) - target

        if gap(0.0) <= 0.0:
            return 0.0
        return float(optimize.brentq(gap, 0.0, upper, xtol=1e-13, rtol=1e-12))

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        values = np.unique(np.concatenate([law.atoms()[0] for law in self.laws]))
        upper = np.ones_like(values)
        lower = np.ones_like(values)
        for law in self.laws:
            upper = upper * law.cdf(values)
            lower = lower * law.mass_below(values)
        return values, upper - lower

    def mean(self) -> float:
        if self.is_discrete:
            values, weights = self.atoms()
            return float(np.dot(values, weights))
        upper = self.truncation_point(1e-15)
        value, _ = integrate.quad(lambda x: float(self.sf(x)), 0.0, upper, limit=200,
                                  points=self.quantile_breakpoints(0.0, upper) or None)
        return float(value)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "max_independent", "laws": [law.to_dict() for law in self.laws]}


def max_law(laws: Sequence[GainDistribution]) -> GainDistribution:
    """gamma_max law: the iid order statistic when every receiver shares one law."""
    laws = tuple(laws)
    if all(law == laws[0] for law in laws):
        return MaxOrderStatistic(laws[0], len(laws))
    return MaxOfIndependent(laws)


class ColluderMode(str, Enum):
    SINGLE = "single"
    NONCOLLUDING = "noncolluding"
    COLLUDING = "colluding"


@dataclass(frozen=True)
class ColluderModel:
    """Several eavesdroppers folded into one effective gamma_e law."""

    mode: ColluderMode
    base: GainDistribution
    M: int = 1
    convolution_samples: int = 200_000
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.mode, str) and not isinstance(self.mode, ColluderMode):
            object.__setattr__(self, "mode", ColluderMode(self.mode))
        if self.M < 1:
            raise ValueError("number of eavesdroppers must be positive")
        if self.mode is ColluderMode.SINGLE and self.M != 1:
            raise ValueError("single-eavesdropper mode requires M = 1")

    @cached_property
    def law(self) -> GainDistribution:
        if self.mode is ColluderMode.SINGLE or self.M == 1:
            return self.base
        if self.mode is ColluderMode.NONCOLLUDING:
            return MaxOrderStatistic(self.base, self.M)
        if isinstance(self.base, ExponentialGain):
            return GammaGain(shape=float(self.M), scale=self.base.mean_gain)
        rng = np.random.default_rng(self.seed)
        draws = self.base.sample(rng, (self.convolution_samples, self.M))
        return EmpiricalGain(draws.sum(axis=1))

    def to_dict(self) -> dict[str, Any]:
        return {"mode": self.mode.value, "M": self.M, "base": self.base.to_dict()}


__all__ = [
    "BREAKPOINT_LEVELS",
    "ColluderMode",
    "ColluderModel",
    "CustomGain",
    "EmpiricalGain",
    "ExponentialGain",
    "GainDistribution",
    "GammaGain",
    "MaxOfIndependent",
    "MaxOrderStatistic",
    "max_law",
]
