"""Criteria engine for the Harnack-violation recipe, plus the example catalog.

Given sequences 0 < a_n <= b_n <= c_n, the recipe computes

    R_n   = sqrt( a_n ( d log(c_n/b_n) + 2 log( mu([a_n,b_n]) / mu((b_n,inf)) ) ) )
    theta_n = ( drift + int_{(0,b_n]} s d(mu) ) / mu((b_n, inf))

and checks that c_n dominates R_n^2, that R_n^2 dominates max(b_n, theta_n),
and that the tail of s^(-d/2) against mu is at most c_n^(-d/2) of the tail
mass.  Domination ("much greater than") is operationalized as monotone ratio
growth over the checked index range plus a configurable minimum factor at the
largest index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import DivergentMomentError, RecipeInapplicableError
from .measure import (
    AtomicSum,
    AtomicTail,
    ExponentialMixture,
    Interval,
    SubordinatorSpec,
    converging_tail_sum,
    mass,
    partial_moment,
)

LN2 = math.log(2.0)

CATALOG_PREFIX = 26  # materialized family indices 0..26; analytic tails beyond


@dataclass(frozen=True)
class RecipeInput:
    spec: SubordinatorSpec
    dimension: int
    a: Callable[[int], float]
    b: Callable[[int], float]
    c: Callable[[int], float]
    n_start: int = 1
    label: str = ""

    def sequences_at(self, n: int) -> tuple[float, float, float]:
        an, bn, cn = self.a(n), self.b(n), self.c(n)
        if not (0.0 < an <= bn <= cn):
            raise RecipeInapplicableError(
                f"need 0 < a_n <= b_n <= c_n, got ({an}, {bn}, {cn}) at n={n}"
            )
        return an, bn, cn


@dataclass(frozen=True)
class RecipeReport:
    """Per-index record of every quantity the recipe conditions involve."""

    n: int
    radius: float
    radius_sq: float
    theta: float
    f_value: float          # R_n^2 / b_n
    ratio_large: float      # c_n / R_n^2
    ratio_small: float      # R_n^2 / max(b_n, theta_n)
    tail_moment_lhs: float  # int_(b_n,inf) s^(-d/2) d(mu) / mu((b_n,inf))
    tail_moment_rhs: float  # c_n^(-d/2)
    tail_moment_ok: bool
    kernel_ratio_bound: float  # 2 exp(-3 f / 8)

    CSV_COLUMNS = (
        "n", "radius", "radius_sq", "theta", "f_value", "ratio_large",
        "ratio_small", "tail_moment_lhs", "tail_moment_rhs", "tail_moment_ok",
        "kernel_ratio_bound",
    )

    def as_row(self) -> dict:
        return {c: getattr(self, c) for c in self.CSV_COLUMNS}


@dataclass(frozen=True)
class RecipeRun:
    reports: tuple[RecipeReport, ...]
    tail_moment_all_ok: bool
    ratio_large_increasing: bool
    ratio_small_increasing: bool
    separation_factor: float
    separation_ok: bool
    separation_threshold: float


def critical_radius(inp: RecipeInput, n: int) -> float:
    """R_n, with the mass ratio taken in the log domain."""
    an, bn, cn = inp.sequences_at(n)
    m_band = mass(inp.spec.measure, Interval.closed(an, bn))
    m_tail = mass(inp.spec.measure, Interval.tail(bn))
    if m_band <= 0.0 or m_tail <= 0.0:
        raise RecipeInapplicableError(
            f"vanishing mass at n={n}: mu([a,b])={m_band}, mu((b,inf))={m_tail}"
        )
    bracket = inp.dimension * math.log(cn / bn) + 2.0 * (math.log(m_band) - math.log(m_tail))
    if bracket <= 0.0:
        raise RecipeInapplicableError(f"nonpositive bracket {bracket} at n={n}")
    return math.sqrt(an * bracket)


def prejump_mean(inp: RecipeInput, n: int) -> float:
    """theta_n: expected subordinator value just before the first jump above b_n."""
    _, bn, _ = inp.sequences_at(n)
    m_tail = mass(inp.spec.measure, Interval.tail(bn))
    if m_tail <= 0.0:
        raise RecipeInapplicableError(f"no large jumps beyond b_n={bn} at n={n}")
    small = partial_moment(inp.spec.measure, 1.0, Interval.near_zero(bn))
    return (inp.spec.drift + small) / m_tail


def check_recipe(inp: RecipeInput, ns, separation_threshold: float = 10.0) -> RecipeRun:
    ns = list(ns)
    if not ns:
        raise ValueError("empty index range")
    reports = []
    for n in ns:
        an, bn, cn = inp.sequences_at(n)
        r = critical_radius(inp, n)
        r2 = r * r
        th = prejump_mean(inp, n)
        f = r2 / bn
        lhs = partial_moment(inp.spec.measure, -0.5 * inp.dimension, Interval.tail(bn))
        lhs /= mass(inp.spec.measure, Interval.tail(bn))
        rhs = cn ** (-0.5 * inp.dimension)
        reports.append(RecipeReport(
            n=n, radius=r, radius_sq=r2, theta=th, f_value=f,
            ratio_large=cn / r2, ratio_small=r2 / max(bn, th),
            tail_moment_lhs=lhs, tail_moment_rhs=rhs,
            tail_moment_ok=lhs <= rhs,
            kernel_ratio_bound=2.0 * math.exp(-0.375 * f),
        ))
    large = [r.ratio_large for r in reports]
    small = [r.ratio_small for r in reports]
    inc = lambda xs: all(y > x for x, y in zip(xs, xs[1:]))
    sep = min(large[-1], small[-1])
    return RecipeRun(
        reports=tuple(reports),
        tail_moment_all_ok=all(r.tail_moment_ok for r in reports),
        ratio_large_increasing=inc(large),
        ratio_small_increasing=inc(small),
        separation_factor=sep,
        separation_ok=sep >= separation_threshold,
        separation_threshold=separation_threshold,
    )


# ---------------------------------------------------------------------------
# catalog of the three counterexample families


@dataclass(frozen=True)
class CatalogExample:
    """A counterexample family with its closed forms attached for cross-checks."""

    name: str
    spec: SubordinatorSpec
    default_dimension: int
    n_start: int
    supports_recipe: bool
    radius: Callable[[int, int], float]              # R_n(d)
    theta: Callable[[int], float]                    # theta_n closed form
    theta_bound: Callable[[int], float]
    f_value: Callable[[int, int], float]
    log_ratio_bound: Callable[[int, int], float]     # log of the j-ratio bound
    sqrt_scale: Callable[[int], float]               # sqrt(A_m), the band edges
    radius_sq_closed: Callable[[int, int], float] | None = None
    sim_max_index: int | None = None                 # default path truncation

    def recipe_input(self, dimension: int | None = None) -> RecipeInput:
        if not self.supports_recipe:
            raise RecipeInapplicableError(
                f"{self.name} has a continuous measure: a degenerate band "
                "[A_n, A_n] carries no mass, so it uses its own closed forms"
            )
        d = self.default_dimension if dimension is None else dimension
        return RecipeInput(
            spec=self.spec, dimension=d,
            a=self._band, b=self._band, c=self._band_c,
            n_start=self.n_start, label=self.name,
        )

    # populated per family below
    _band: Callable[[int], float] = None
    _band_c: Callable[[int], float] = None


CATALOG_NAMES = ("large-scale-dirac", "small-scale-dirac", "continuous-expmix")


def _pow2(e: float) -> float:
    if float(e).is_integer():
        k = int(e)
        return math.inf if k > 1023 else math.ldexp(1.0, k)
    if e * LN2 > 708.0:
        return math.inf
    return math.exp(e * LN2)


def _large_scale_tail() -> AtomicTail:
    # weights 2^-m at locations 2^(m^2), indices beyond the prefix
    def power_sum(cut: int, p: float) -> float:
        if p > 0.0:
            raise DivergentMomentError(
                "sum of 2^-m * 2^(p m^2) diverges for p > 0"
            )
        if p == 0.0:
            return 2.0 ** (-cut)
        return converging_tail_sum(
            lambda m: math.exp((-m + p * m * m) * LN2), cut + 1
        )

    return AtomicTail(
        weight=lambda m: 2.0 ** (-m),
        location=lambda m: _pow2(m * m),
        power_sum=power_sum,
    )


def _small_scale_tail() -> AtomicTail:
    # unit weights at locations 2^(-m^2)
    def power_sum(cut: int, p: float) -> float:
        if p <= 0.0:
            raise DivergentMomentError(
                "sum of 2^(-p m^2) diverges for p <= 0 (infinitely many atoms)"
            )
        return converging_tail_sum(
            lambda m: math.exp(-p * m * m * LN2), cut + 1
        )

    return AtomicTail(
        weight=lambda m: 1.0,
        location=lambda m: _pow2(-float(m * m)),
        power_sum=power_sum,
    )


def _theta_large(n: int) -> float:
    # 2^n * sum_{m<=n} 2^(m^2 - m)
    return _pow2(n) * math.fsum(_pow2(m * m - m) for m in range(n + 1))


def catalog(name: str) -> CatalogExample:
    """The three counterexample families, fully populated."""
    ms = range(CATALOG_PREFIX + 1)
    if name == "large-scale-dirac":
        meas = AtomicSum(
            weights=tuple(2.0 ** (-m) for m in ms),
            locations=tuple(_pow2(m * m) for m in ms),
            tail=_large_scale_tail(),
            label=name,
        )
        ex = CatalogExample(
            name=name,
            spec=SubordinatorSpec(0.0, meas),
            default_dimension=1,
            n_start=1,
            supports_recipe=True,
            radius=lambda n, d: math.sqrt(_pow2(n * n) * d * (2 * n + 1) * LN2),
            radius_sq_closed=lambda n, d: _pow2(n * n) * (d / math.log2(math.e)) * (2 * n + 1),
            theta=_theta_large,
            theta_bound=lambda n: _pow2(n * n) * (1.0 + n * 2.0 ** (-2 * n + 2)),
            f_value=lambda n, d: d * (2 * n + 1) * LN2,
            log_ratio_bound=lambda n, d: LN2 - 0.375 * d * (2 * n + 1) * LN2,
            sqrt_scale=lambda m: _pow2(0.5 * m * m),
        )
        object.__setattr__(ex, "_band", lambda n: _pow2(n * n))
        object.__setattr__(ex, "_band_c", lambda n: _pow2((n + 1) * (n + 1)))
        return ex

    if name == "small-scale-dirac":
        meas = AtomicSum(
            weights=tuple(1.0 for _ in ms),
            locations=tuple(_pow2(-float(m * m)) for m in ms),
            tail=_small_scale_tail(),
            label=name,
        )

        def radius_sq(n: int, d: int) -> float:
            return _pow2(-float(n * n)) * (d * (2 * n - 1) * LN2 - 2.0 * math.log(n))

        ex = CatalogExample(
            name=name,
            spec=SubordinatorSpec(0.0, meas),
            default_dimension=1,
            n_start=2,
            supports_recipe=True,
            radius=lambda n, d: math.sqrt(radius_sq(n, d)),
            radius_sq_closed=radius_sq,
            theta=lambda n: converging_tail_sum(
                lambda m: _pow2(-float(m * m)), n) / n,
            theta_bound=lambda n: 2.0 * _pow2(-float(n * n)) / n,
            f_value=lambda n, d: d * (2 * n - 1) * LN2 - 2.0 * math.log(n),
            log_ratio_bound=lambda n, d: LN2 - 0.375 * (d * (2 * n - 1) * LN2 - 2.0 * math.log(n)),
            sqrt_scale=lambda m: _pow2(-0.5 * m * m),
        )
        object.__setattr__(ex, "_band", lambda n: _pow2(-float(n * n)))
        object.__setattr__(ex, "_band_c", lambda n: _pow2(-float((n - 1) * (n - 1))))
        return ex

    if name == "continuous-expmix":
        meas = ExponentialMixture(
            weights=tuple(2.0 ** (-m) for m in ms),
            scales=tuple(_pow2(m * m) for m in ms),
            label=name,
        )

        def radius(n: int, d: int) -> float:
            # sqrt(A_n / 8) * log(A_{n+1} / A_n); d-independent, defined for d=1
            return _pow2(0.5 * (n * n - 3)) * (2 * n + 1) * LN2

        def f_value(n: int, d: int) -> float:
            # R_n / sqrt(A_n) = log(A_{n+1}/A_n) / (2 sqrt(2))
            return (2 * n + 1) * LN2 / (2.0 * math.sqrt(2.0))

        return CatalogExample(
            name=name,
            spec=SubordinatorSpec(0.0, meas),
            default_dimension=1,
            n_start=1,
            supports_recipe=False,
            radius=radius,
            theta=_theta_large,
            theta_bound=lambda n: _pow2(n * n) * (1.0 + (n - 1) * 2.0 ** (-2 * (n - 1))),
            f_value=f_value,
            log_ratio_bound=lambda n, d: LN2 - f_value(n, d) / math.sqrt(2.0),
            sqrt_scale=lambda m: _pow2(0.5 * m * m),
        )

    raise KeyError(f"unknown catalog example {name!r}; know {CATALOG_NAMES}")
