"""Levy measures on (0, inf) and subordinator parameterizations.

Three representations are supported:

* ``AtomicSum`` -- a finite list of point masses (weight, location), optionally
  extended by an analytic tail descriptor for infinite families.
* ``ExponentialMixture`` -- density ``sum_m (H_m / A_m) exp(-x / A_m)``.
* ``GeneralDensity`` -- an arbitrary nonnegative density with explicit
  quadrature cutoffs (no guessing about behavior outside them).

Interval masses, partial moments and the Laplace exponent are exact
(closed forms plus analytic tails) for the first two representations and
adaptive quadrature for the third.  All positive sums go through
``math.fsum``; the catalog families span ~2^(n^2) of dynamic range.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

from scipy import integrate, special

from .errors import (
    DivergentMomentError,
    InvalidSpecError,
    ToolkitError,
    UnboundedMassError,
)

_MAX_TAIL_SCAN = 100_000


# ---------------------------------------------------------------------------
# intervals


@dataclass(frozen=True)
class Interval:
    """An interval on (0, inf); endpoint openness matters only for atoms."""

    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False

    @classmethod
    def closed(cls, a: float, b: float) -> "Interval":
        if not (0.0 < a <= b):
            raise ValueError(f"need 0 < a <= b, got [{a}, {b}]")
        return cls(a, b)

    @classmethod
    def tail(cls, b: float) -> "Interval":
        """(b, inf)"""
        if not b > 0.0:
            raise ValueError("tail cut must be positive")
        return cls(b, math.inf, lo_open=True, hi_open=True)

    @classmethod
    def near_zero(cls, b: float) -> "Interval":
        """(0, b]"""
        if not b > 0.0:
            raise ValueError("upper end must be positive")
        return cls(0.0, b, lo_open=True)

    def contains_point(self, x: float) -> bool:
        if self.lo_open:
            if not x > self.lo:
                return False
        elif not x >= self.lo:
            return False
        if self.hi_open:
            return x < self.hi
        return x <= self.hi


# ---------------------------------------------------------------------------
# measure variants


@dataclass(frozen=True)
class AtomicTail:
    """Analytic description of atoms at indices beyond the explicit prefix.

    ``power_sum(cut, p)`` must return ``sum_{m > cut} H_m * A_m**p`` exactly
    (closed form or a convergent series with a rigorous stopping rule) and
    raise ``DivergentMomentError`` when the sum diverges.  ``weight`` and
    ``location`` give individual terms so interval queries can be resolved
    index by index.
    """

    weight: Callable[[int], float]
    location: Callable[[int], float]
    power_sum: Callable[[int, float], float]


@dataclass(frozen=True)
class AtomicSum:
    """``mu = sum_m H_m delta_{A_m}`` with strictly monotone locations."""

    weights: tuple[float, ...]
    locations: tuple[float, ...]
    tail: AtomicTail | None = None
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "locations", tuple(float(a) for a in self.locations))
        if len(self.weights) != len(self.locations):
            raise ValueError("weights and locations must have equal length")

    @cached_property
    def increasing(self) -> bool:
        locs = self.locations
        if len(locs) >= 2:
            return locs[1] > locs[0]
        if self.tail is not None:
            m = len(locs)
            return self.tail.location(m + 1) > self.tail.location(m)
        return True

    def structural_violations(self) -> list[str]:
        out = []
        if any(not (w > 0.0 and math.isfinite(w)) for w in self.weights):
            out.append("atomic weights must be positive and finite")
        if any(not (a > 0.0 and math.isfinite(a)) for a in self.locations):
            out.append("atom locations must be positive and finite")
        locs = self.locations
        if len(locs) >= 2:
            diffs = [locs[i + 1] - locs[i] for i in range(len(locs) - 1)]
            if not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
                out.append("atom locations must be strictly monotone")
        return out


@dataclass(frozen=True)
class ExponentialMixture:
    """Density ``sum_m (H_m / A_m) exp(-x / A_m)`` on (0, inf)."""

    weights: tuple[float, ...]
    scales: tuple[float, ...]
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "scales", tuple(float(a) for a in self.scales))
        if len(self.weights) != len(self.scales):
            raise ValueError("weights and scales must have equal length")

    def density(self, x: float) -> float:
        return math.fsum(
            (h / a) * math.exp(-x / a) for h, a in zip(self.weights, self.scales)
        )

    def structural_violations(self) -> list[str]:
        out = []
        if any(not (w > 0.0 and math.isfinite(w)) for w in self.weights):
            out.append("mixture weights must be positive and finite")
        if any(not (a > 0.0 and math.isfinite(a)) for a in self.scales):
            out.append("mixture scales must be positive and finite")
        return out


@dataclass(frozen=True)
class GeneralDensity:
    """A nonnegative density with explicit quadrature cutoffs.

    The density is only evaluated inside ``[lower, upper]``: above ``upper``
    it is treated as negligible, below a positive ``lower`` its behavior is
    unknown and interval queries reaching there raise ``UnboundedMassError``.
    """

    density: Callable[[float], float]
    lower: float
    upper: float
    expr: str | None = None  # serializable form, when constructed from one

    def structural_violations(self) -> list[str]:
        out = []
        if not (0.0 <= self.lower < self.upper):
            out.append("need 0 <= lower < upper quadrature cutoffs")
        else:
            probes = [
                self.lower + (self.upper - self.lower) * t
                for t in (1e-6, 0.25, 0.5, 0.75, 1.0 - 1e-6)
            ]
            try:
                if any(self.density(x) < 0.0 for x in probes):
                    out.append("density takes negative values")
            except Exception:
                out.append("density is not evaluable on its cutoff window")
        return out


Measure = AtomicSum | ExponentialMixture | GeneralDensity


@dataclass(frozen=True)
class SubordinatorSpec:
    """Drift plus Levy measure; the full parameterization of an SBM."""

    drift: float
    measure: Measure

    @cached_property
    def violations(self) -> tuple[str, ...]:
        return tuple(validate(self))

    def require_valid(self) -> None:
        if self.violations:
            raise InvalidSpecError(self.violations)


# ---------------------------------------------------------------------------
# series helper


def converging_tail_sum(term: Callable[[int], float], start: int,
                        max_terms: int = 400) -> float:
    """Sum ``term(m)`` for ``m >= start`` assuming at-least-geometric decay.

    Stops once the next term falls below 1e-18 of the accumulated value and
    bounds the remainder by twice the first omitted term (valid when the
    decay ratio is at most 1/2, which is checked).
    """
    terms = []
    prev = math.inf
    for m in range(start, start + max_terms):
        t = term(m)
        if not math.isfinite(t) or t < 0.0:
            raise DivergentMomentError(f"series term at m={m} is {t}")
        if t > 0.0 and t > 0.5 * prev and m > start:
            raise DivergentMomentError(
                "series does not decay geometrically (ratio > 1/2)"
            )
        terms.append(t)
        acc = math.fsum(terms)
        if t <= 1e-18 * acc or t == 0.0:
            return acc
        prev = t
    raise DivergentMomentError("series did not converge within term budget")


# ---------------------------------------------------------------------------
# atomic interval machinery


def _atomic_interval_power_sum(meas: AtomicSum, p: float, iv: Interval) -> float:
    """sum of H * A**p over atoms of `meas` inside `iv` (analytic tails included)."""
    if iv.lo == 0.0 and meas.tail is None and not meas.increasing:
        # finite explicit list: fine; (handled below like any other interval)
        pass
    terms = [
        h * _safe_pow(a, p)
        for h, a in zip(meas.weights, meas.locations)
        if iv.contains_point(a)
    ]
    total = math.fsum(terms)
    tail = meas.tail
    if tail is None:
        return total
    start = len(meas.weights)
    if meas.increasing:
        if math.isinf(iv.hi):
            m0 = _scan_until(tail, start, lambda a: iv.contains_point(a))
            return total + tail.power_sum(m0 - 1, p)
        extra = []
        for m in range(start, start + _MAX_TAIL_SCAN):
            a = tail.location(m)
            if a > iv.hi:
                return total + math.fsum(extra)
            if iv.contains_point(a):
                extra.append(tail.weight(m) * _safe_pow(a, p))
        raise ToolkitError("tail scan exhausted (increasing locations)")
    # decreasing locations
    if iv.lo == 0.0:
        m0 = _scan_until(tail, start, lambda a: iv.contains_point(a))
        return total + tail.power_sum(m0 - 1, p)
    extra = []
    for m in range(start, start + _MAX_TAIL_SCAN):
        a = tail.location(m)
        if a < iv.lo:
            return total + math.fsum(extra)
        if iv.contains_point(a):
            extra.append(tail.weight(m) * _safe_pow(a, p))
    raise ToolkitError("tail scan exhausted (decreasing locations)")


def _scan_until(tail: AtomicTail, start: int, pred) -> int:
    for m in range(start, start + _MAX_TAIL_SCAN):
        if pred(tail.location(m)):
            return m
    raise ToolkitError("tail scan exhausted")


def _safe_pow(a: float, p: float) -> float:
    if p == 0.0:
        return 1.0
    try:
        return a ** p
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# mixture closed forms


def _mixture_mass(meas: ExponentialMixture, iv: Interval) -> float:
    lo = max(iv.lo, 0.0)
    if math.isinf(iv.hi):
        return math.fsum(
            h * math.exp(-lo / a) for h, a in zip(meas.weights, meas.scales)
        )
    return math.fsum(
        h * (math.exp(-lo / a) - math.exp(-iv.hi / a))
        for h, a in zip(meas.weights, meas.scales)
    )


def _mixture_partial_moment(meas: ExponentialMixture, p: float, iv: Interval) -> float:
    # per component: H * A**p * int_{lo/A}^{hi/A} u**p e^{-u} du
    out = []
    for h, a in zip(meas.weights, meas.scales):
        x1 = iv.lo / a
        x2 = iv.hi / a  # may be inf
        if p > -1.0:
            g = math.gamma(p + 1.0)
            if math.isinf(x2):
                val = g * float(special.gammaincc(p + 1.0, x1))
            else:
                val = g * float(special.gammainc(p + 1.0, x2) - special.gammainc(p + 1.0, x1))
        else:
            if x1 <= 0.0:
                raise DivergentMomentError(
                    f"moment p={p} diverges at 0 for an exponential mixture"
                )
            if p == -1.0:
                e1 = special.exp1
                val = float(e1(x1) - (0.0 if math.isinf(x2) else e1(x2)))
            else:
                val, _ = integrate.quad(
                    lambda u: u ** p * math.exp(-u), x1, x2, limit=200,
                    epsabs=0.0, epsrel=1e-11,
                )
        out.append(h * _safe_pow(a, p) * val)
    return math.fsum(out)


# ---------------------------------------------------------------------------
# general-density quadrature


def _density_window(meas: GeneralDensity, iv: Interval) -> tuple[float, float]:
    if iv.lo < meas.lower and not (iv.lo == 0.0 and meas.lower == 0.0):
        if meas.lower > 0.0:
            raise UnboundedMassError(
                "interval reaches below the density's lower cutoff; "
                "no analytic behavior is available there"
            )
    lo = max(iv.lo, meas.lower)
    hi = min(iv.hi, meas.upper)
    return lo, hi


def _density_integral(meas: GeneralDensity, f, iv: Interval) -> float:
    lo, hi = _density_window(meas, iv)
    if hi <= lo:
        return 0.0
    val, err = integrate.quad(f, lo, hi, limit=400, epsabs=0.0, epsrel=1e-10)
    if not math.isfinite(val):
        raise DivergentMomentError("quadrature returned a non-finite value")
    if err > max(1e-9 * abs(val), 1e-300):
        # one retry with subdivision hints at geometric interior points
        pts = [lo * (hi / lo) ** t for t in (0.25, 0.5, 0.75)] if lo > 0 else None
        val, err = integrate.quad(
            f, lo, hi, limit=800, epsabs=0.0, epsrel=1e-10, points=pts
        )
    return val


# ---------------------------------------------------------------------------
# public operations


def mass(measure: Measure, interval: Interval) -> float:
    """mu(interval), exact for atoms/mixtures, quadrature for densities."""
    if isinstance(measure, AtomicSum):
        try:
            return _atomic_interval_power_sum(measure, 0.0, interval)
        except DivergentMomentError as exc:
            raise UnboundedMassError(str(exc)) from exc
    if isinstance(measure, ExponentialMixture):
        return _mixture_mass(measure, interval)
    return _density_integral(measure, measure.density, interval)


def partial_moment(measure: Measure, p: float, interval: Interval) -> float:
    """integral of s**p over the interval against the measure."""
    if isinstance(measure, AtomicSum):
        return _atomic_interval_power_sum(measure, p, interval)
    if isinstance(measure, ExponentialMixture):
        return _mixture_partial_moment(measure, p, interval)
    return _density_integral(measure, lambda x: x ** p * measure.density(x), interval)


def laplace_exponent(spec: SubordinatorSpec, lam: float) -> float:
    """phi(lam) = drift*lam + integral of (1 - exp(-lam*x)) d(mu)."""
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    spec.require_valid()
    meas = spec.measure
    if isinstance(meas, AtomicSum):
        body = math.fsum(
            -h * math.expm1(-lam * a) for h, a in zip(meas.weights, meas.locations)
        )
        body += _atomic_tail_laplace(meas, lam)
    elif isinstance(meas, ExponentialMixture):
        body = math.fsum(
            h * lam * a / (1.0 + lam * a) for h, a in zip(meas.weights, meas.scales)
        )
    else:
        body = _density_integral(
            meas, lambda x: -math.expm1(-lam * x) * meas.density(x),
            Interval(meas.lower if meas.lower > 0 else 0.0, meas.upper),
        )
    return spec.drift * lam + body


def _atomic_tail_laplace(meas: AtomicSum, lam: float) -> float:
    tail = meas.tail
    if tail is None:
        return 0.0
    start = len(meas.weights)
    if meas.increasing:
        # 1 - exp(-lam*A_m) -> 1; sweep until the defect is negligible
        acc = []
        for m in range(start, start + _MAX_TAIL_SCAN):
            a = tail.location(m)
            if lam * a > 40.0:
                return math.fsum(acc) + tail.power_sum(m - 1, 0.0)
            acc.append(-tail.weight(m) * math.expm1(-lam * a))
        raise ToolkitError("tail scan exhausted in laplace_exponent")
    # decreasing: 1 - exp(-lam*A_m) ~= lam*A_m once lam*A_m is tiny
    acc = []
    for m in range(start, start + _MAX_TAIL_SCAN):
        a = tail.location(m)
        if lam * a < 1e-8:
            return math.fsum(acc) + lam * tail.power_sum(m - 1, 1.0)
        acc.append(-tail.weight(m) * math.expm1(-lam * a))
    raise ToolkitError("tail scan exhausted in laplace_exponent")


def validate(spec: SubordinatorSpec) -> list[str]:
    """Report every violated invariant; an empty list means the spec is valid.

    Validation never aborts: each check appends to the report.
    """
    out: list[str] = []
    if not (spec.drift >= 0.0 and math.isfinite(spec.drift)):
        out.append("drift must be a finite nonnegative real")
    meas = spec.measure
    out.extend(meas.structural_violations())
    if out:
        return out

    # integrability of (1 ^ x): split at 1
    try:
        small = partial_moment(meas, 1.0, Interval.near_zero(1.0))
        big = mass(meas, Interval.tail(1.0))
        total_near_one = small + big
        if not math.isfinite(total_near_one):
            out.append("integral of (1 ^ x) d(mu) is not finite")
    except (UnboundedMassError, DivergentMomentError) as exc:
        out.append(f"integral of (1 ^ x) d(mu) is not finite: {exc}")
        total_near_one = math.inf

    # non-degeneracy
    if spec.drift == 0.0:
        if math.isfinite(total_near_one) and total_near_one == 0.0:
            out.append("degenerate spec: zero drift and zero measure")
    return out


# ---------------------------------------------------------------------------
# JSON schema (shared with the CLI)
#
#   {"drift": float, "measure": {"type": "atomic", "weights": [...],
#                                "locations": [...]}}
#   {"drift": float, "measure": {"type": "expmix", "weights": [...],
#                                "scales": [...]}}
#   {"drift": float, "measure": {"type": "density", "expr": "exp(-x)/x**0.5",
#                                "lower": float, "upper": float}}
#   {"drift": float, "measure": {"type": "catalog", "name": "large-scale-dirac"}}


_ALLOWED_FUNCS = {
    "exp": math.exp, "log": math.log, "sqrt": math.sqrt, "abs": abs,
    "pow": math.pow, "sin": math.sin, "cos": math.cos, "tanh": math.tanh,
}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Call,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
    ast.Load, ast.Mod,
)


def _compile_density_expr(expr: str) -> Callable[[float], float]:
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax in density expression: {ast.dump(node)[:40]}")
        if isinstance(node, ast.Name) and node.id != "x" and node.id not in _ALLOWED_FUNCS:
            raise ValueError(f"unknown name {node.id!r} in density expression")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
                raise ValueError("only whitelisted function calls are allowed")
    code = compile(tree, "<density>", "eval")

    def density(x: float) -> float:
        return float(eval(code, {"__builtins__": {}}, {**_ALLOWED_FUNCS, "x": x}))

    return density


def spec_to_json(spec: SubordinatorSpec) -> dict:
    meas = spec.measure
    if isinstance(meas, AtomicSum):
        if meas.tail is not None:
            if meas.label is None:
                raise ToolkitError(
                    "atomic specs with analytic tails serialize only via a catalog label"
                )
            m = {"type": "catalog", "name": meas.label}
        else:
            m = {
                "type": "atomic",
                "weights": list(meas.weights),
                "locations": list(meas.locations),
            }
    elif isinstance(meas, ExponentialMixture):
        if meas.label is not None:
            m = {"type": "catalog", "name": meas.label}
        else:
            m = {
                "type": "expmix",
                "weights": list(meas.weights),
                "scales": list(meas.scales),
            }
    else:
        if meas.expr is None:
            raise ToolkitError("only expression-backed densities serialize to JSON")
        m = {"type": "density", "expr": meas.expr,
             "lower": meas.lower, "upper": meas.upper}
    return {"drift": spec.drift, "measure": m}


def spec_from_json(doc: dict) -> SubordinatorSpec:
    drift = float(doc["drift"])
    m = doc["measure"]
    kind = m["type"]
    if kind == "atomic":
        meas: Measure = AtomicSum(tuple(m["weights"]), tuple(m["locations"]))
    elif kind == "expmix":
        meas = ExponentialMixture(tuple(m["weights"]), tuple(m["scales"]))
    elif kind == "density":
        meas = GeneralDensity(
            _compile_density_expr(m["expr"]),
            lower=float(m["lower"]), upper=float(m["upper"]), expr=m["expr"],
        )
    elif kind == "catalog":
        from .recipe import catalog  # lazy: recipe depends on measure

        entry = catalog(m["name"])
        if entry.spec.drift != drift:
            return SubordinatorSpec(drift, entry.spec.measure)
        return entry.spec
    else:
        raise ValueError(f"unknown measure type {kind!r}")
    return SubordinatorSpec(drift, meas)
