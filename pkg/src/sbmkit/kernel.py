"""Jump kernel of a subordinated Brownian motion.

The radial kernel is a Gaussian mixture against the subordinator's Levy
measure,

    j(r) = integral of (2 pi s)^(-d/2) exp(-r^2 / (2 s)) d(mu)(s),

with closed forms for atomic measures (a finite Gaussian sum) and, in d=1,
for exponential mixtures (a Laplace-kernel sum).  Everything is evaluated in
the log domain and combined with log-sum-exp: the catalog families need
ratios of terms as small as exp(-2^(n^2)), far below double underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, optimize, special

from .errors import (
    DivergentMomentError,
    DynamicRangeError,
    PrecisionUnattainableError,
    SingularRegionError,
    ToolkitError,
    UnboundedMassError,
)
from .measure import (
    AtomicSum,
    ExponentialMixture,
    GeneralDensity,
    Interval,
    SubordinatorSpec,
    partial_moment,
)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned product of d intervals (the cylinders are boxes in d=2)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise ValueError("lower/upper dimension mismatch")
        if any(u < l for l, u in zip(self.lower, self.upper)):
            raise ValueError("box upper bounds must be >= lower bounds")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        v = 1.0
        for l, u in zip(self.lower, self.upper):
            v *= u - l
        return v

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def nearest_distance(self, x) -> float:
        """Distance from x to the closed box (0 when inside)."""
        x = np.asarray(x, dtype=float)
        d = np.maximum(np.asarray(self.lower) - x, 0.0)
        d = np.maximum(d, x - np.asarray(self.upper))
        return float(np.linalg.norm(d))

    def farthest_distance(self, x) -> float:
        x = np.asarray(x, dtype=float)
        d = np.maximum(np.abs(x - np.asarray(self.lower)),
                       np.abs(x - np.asarray(self.upper)))
        return float(np.linalg.norm(d))


@dataclass(frozen=True)
class KernelRatio:
    """j(r) / j(c r) together with its log, which survives underflow."""

    value: float
    log_value: float
    log_numerator: float
    log_denominator: float


STRATEGY_ATOMIC = "closed-form-atomic"
STRATEGY_EXPMIX_1D = "closed-form-expmix-1d"
STRATEGY_QUADRATURE = "quadrature"


@dataclass(frozen=True)
class KernelEvaluator:
    dimension: int
    spec: SubordinatorSpec
    strategy: str
    rel_tol: float = 1e-9
    drop_nats: float = 60.0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if self.strategy == STRATEGY_EXPMIX_1D:
            if self.dimension != 1 or not isinstance(self.spec.measure, ExponentialMixture):
                raise ValueError(
                    "closed-form-expmix-1d requires d=1 and an ExponentialMixture"
                )
        elif self.strategy == STRATEGY_ATOMIC:
            if not isinstance(self.spec.measure, AtomicSum):
                raise ValueError("closed-form-atomic requires an AtomicSum measure")
        elif self.strategy != STRATEGY_QUADRATURE:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @classmethod
    def for_spec(cls, spec: SubordinatorSpec, dimension: int, **kw) -> "KernelEvaluator":
        meas = spec.measure
        if isinstance(meas, AtomicSum):
            strat = STRATEGY_ATOMIC
        elif isinstance(meas, ExponentialMixture) and dimension == 1:
            strat = STRATEGY_EXPMIX_1D
        else:
            strat = STRATEGY_QUADRATURE
        return cls(dimension, spec, strat, **kw)

    # -- cached per-component arrays ---------------------------------------

    @cached_property
    def _log_weights(self) -> np.ndarray:
        meas = self.spec.measure
        ws = meas.weights if not isinstance(meas, GeneralDensity) else ()
        return np.log(np.asarray(ws, dtype=float))

    @cached_property
    def _log_scales(self) -> np.ndarray:
        meas = self.spec.measure
        if isinstance(meas, AtomicSum):
            return np.log(np.asarray(meas.locations, dtype=float))
        if isinstance(meas, ExponentialMixture):
            return np.log(np.asarray(meas.scales, dtype=float))
        return np.asarray([])

    # -- radial kernel ------------------------------------------------------

    def log_radial(self, r: float) -> float:
        """log j(r); r > 0."""
        if not r > 0.0:
            raise ValueError("r must be positive")
        if self.strategy == STRATEGY_ATOMIC:
            return self._log_radial_atomic(r)
        if self.strategy == STRATEGY_EXPMIX_1D:
            return self._log_radial_expmix1d(r)
        return self._log_radial_quadrature(r)

    def radial(self, r: float) -> float:
        """j(r) itself; underflows to 0.0 below double range (log stays exact)."""
        lr = self.log_radial(r)
        return math.exp(lr) if lr > -745.0 else 0.0

    def _atomic_terms(self, r: float, d: int) -> np.ndarray:
        logA = self._log_scales
        # exp(-logA) underflows harmlessly to 0 for astronomically large atoms
        expo = -0.5 * r * r * np.exp(-logA)
        return self._log_weights - 0.5 * d * (LOG_2PI + logA) + expo

    def _log_radial_atomic(self, r: float) -> float:
        meas: AtomicSum = self.spec.measure
        terms = self._atomic_terms(r, self.dimension)
        tmax = float(np.max(terms))
        kept = terms[terms > tmax - self.drop_nats] if math.isfinite(tmax) else terms
        val = float(special.logsumexp(kept))
        bound = self._atomic_tail_log_bound(meas, r)
        if bound is not None and bound > val + math.log(self.rel_tol):
            raise PrecisionUnattainableError(
                f"atomic tail bound exp({bound:.3g}) exceeds tolerance at r={r!r}"
            )
        return val

    @cached_property
    def _increasing_tail_log_psum(self) -> float:
        # log of sum_{m > prefix} H_m A_m^(-d/2); inf marks divergence
        meas: AtomicSum = self.spec.measure
        try:
            psum = meas.tail.power_sum(len(meas.weights) - 1, -0.5 * self.dimension)
        except DivergentMomentError:
            return math.inf
        return math.log(psum) if psum > 0.0 else -math.inf

    def _atomic_tail_log_bound(self, meas: AtomicSum, r: float) -> float | None:
        tail = meas.tail
        if tail is None:
            return None
        m0 = len(meas.weights)
        d = self.dimension
        if meas.increasing:
            # terms beyond the prefix are <= H_m (2 pi A_m)^(-d/2)
            lp = self._increasing_tail_log_psum
            if math.isinf(lp) and lp > 0:
                return math.inf
            return -0.5 * d * LOG_2PI + lp
        # decreasing locations: extend explicitly, then geometric bound
        logs = []
        for m in range(m0, m0 + 8):
            a = tail.location(m)
            if a <= 0.0:
                logs.append(-math.inf)
                continue
            logs.append(
                math.log(tail.weight(m))
                - 0.5 * d * (LOG_2PI + math.log(a))
                - r * r / (2.0 * a)
            )
        # past the kernel peak these decay faster than geometrically
        finite = [v for v in logs if v > -math.inf]
        if not finite:
            return -math.inf
        return special.logsumexp(logs) + math.log(2.0)

    def _log_radial_expmix1d(self, r: float) -> float:
        logA = self._log_scales
        rate = np.exp(0.5 * (math.log(2.0) - logA))  # sqrt(2 / A)
        terms = self._log_weights - 0.5 * (math.log(2.0) + logA) - rate * r
        return float(special.logsumexp(terms))

    def _log_radial_quadrature(self, r: float) -> float:
        meas = self.spec.measure
        d = self.dimension
        if isinstance(meas, GeneralDensity):
            lo, hi = meas.lower, meas.upper
            log_rho = lambda s: _safe_log(meas.density(s))
        elif isinstance(meas, ExponentialMixture):
            lo, hi = 0.0, max(meas.scales) * 200.0
            log_rho = lambda s: _safe_log(meas.density(s))
        else:  # pragma: no cover - atomic always uses the closed form
            raise ToolkitError("quadrature strategy needs a density-like measure")
        lo = max(lo, r * r / 1500.0)  # below this the Gaussian factor underflows
        if not hi > lo:
            return -math.inf

        def log_g(u: float) -> float:
            s = math.exp(u)
            return -0.5 * d * (LOG_2PI + u) - r * r / (2.0 * s) + log_rho(s) + u

        return _log_quad(log_g, math.log(lo), math.log(hi))

    # -- ratios --------------------------------------------------------------

    def ratio(self, r: float, c: float = 0.5) -> KernelRatio:
        """j(r) / j(c r), formed once in the log domain."""
        if not (0.0 < c < 1.0):
            raise ValueError("c must lie in (0, 1)")
        num = self.log_radial(r)
        den = self.log_radial(c * r)
        if not math.isfinite(den) or not math.isfinite(num):
            raise DynamicRangeError(
                f"kernel underflows in the log domain at r={r!r} (c={c!r})"
            )
        log_ratio = num - den
        value = math.exp(log_ratio) if log_ratio > -745.0 else 0.0
        return KernelRatio(value, log_ratio, num, den)

    # -- region integrals -----------------------------------------------------

    def region_intensity(self, x, region: BoxRegion) -> float:
        """J(x, U) = integral of j(|x - y|) over the box U."""
        vals = self.region_intensity_batch(np.asarray(x, dtype=float)[None, :], region)
        return float(vals[0])

    def region_intensity_batch(self, points: np.ndarray, region: BoxRegion) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if region.dimension != self.dimension or pts.shape[1] != self.dimension:
            raise ValueError("dimension mismatch between evaluator, points and region")
        if region.volume == 0.0:
            return np.zeros(len(pts))
        if self.strategy == STRATEGY_ATOMIC:
            return self._region_atomic(pts, region)
        if self.strategy == STRATEGY_EXPMIX_1D:
            return self._region_expmix1d(pts, region)
        return np.asarray([self._region_quadrature(p, region) for p in pts])

    def _region_atomic(self, pts: np.ndarray, region: BoxRegion) -> np.ndarray:
        # per atom, the Gaussian box probability factorizes across coordinates
        meas: AtomicSum = self.spec.measure
        sigma = np.exp(0.5 * self._log_scales)  # sqrt(A_m)
        lo = np.asarray(region.lower)
        hi = np.asarray(region.upper)
        if meas.tail is not None and not meas.increasing:
            # atoms accumulating at 0: J(x, U) diverges for x inside U unless
            # the tail's total mass converges
            gap = np.maximum(lo[None, :] - pts, 0.0) + np.maximum(pts - hi[None, :], 0.0)
            if np.any(np.all(gap == 0.0, axis=1)):
                try:
                    meas.tail.power_sum(len(meas.weights) - 1, 0.0)
                except DivergentMomentError as exc:
                    raise SingularRegionError(
                        f"infinite activity makes J(x, U) infinite inside U: {exc}"
                    ) from exc
        # shapes: pts (k, d), sigma (n,) -> (k, n, d)
        z_hi = (hi[None, None, :] - pts[:, None, :]) / sigma[None, :, None]
        z_lo = (lo[None, None, :] - pts[:, None, :]) / sigma[None, :, None]
        probs = np.prod(special.ndtr(z_hi) - special.ndtr(z_lo), axis=2)
        vals = probs @ np.asarray(meas.weights)
        self._check_region_tail(meas, region)
        return vals

    def _check_region_tail(self, meas: AtomicSum, region: BoxRegion) -> None:
        # tail atoms contribute at most |U| (2 pi)^(-d/2) sum H_m A_m^(-d/2)
        if meas.tail is None:
            return
        lp = self._increasing_tail_log_psum if meas.increasing else -math.inf
        if math.isinf(lp) and lp > 0:
            raise PrecisionUnattainableError("atomic tail is not (d/2)-integrable")

    def _region_expmix1d(self, pts: np.ndarray, region: BoxRegion) -> np.ndarray:
        meas: ExponentialMixture = self.spec.measure
        a, b = region.lower[0], region.upper[0]
        x = pts[:, 0]
        out = np.zeros_like(x)
        for h, scale in zip(meas.weights, meas.scales):
            k = math.sqrt(2.0 / scale)
            coeff = h * math.sqrt(1.0 / (2.0 * scale))
            # piecewise primitive of exp(-k |x - y|) in y over [a, b]
            left = np.minimum(np.maximum(x, a), b)   # split point clamped to [a, b]
            below = (np.exp(-k * (x - left)) - np.exp(-k * (x - a))) / k
            above = (np.exp(-k * (left - x)) - np.exp(-k * (b - x))) / k
            out += coeff * (below + above)
        return out

    def _region_quadrature(self, x: np.ndarray, region: BoxRegion) -> float:
        if region.nearest_distance(x) == 0.0:
            self._require_bounded_at_zero()
        d = region.dimension
        j = lambda r: math.exp(lr) if (lr := self.log_radial(r)) > -745.0 else 0.0

        def integrand(*ys):
            rr = math.dist(tuple(x), ys)
            return j(rr) if rr > 0 else j(1e-300)

        ranges = [(l, u) for l, u in zip(region.lower, region.upper)]
        val, _ = integrate.nquad(
            lambda *ys: integrand(*ys), ranges,
            opts={"limit": 200, "epsabs": 0.0, "epsrel": 1e-8},
        )
        return val

    def _require_bounded_at_zero(self) -> None:
        # j(0+) is finite iff the (-d/2)-moment of the measure converges
        try:
            partial_moment(self.spec.measure, -0.5 * self.dimension,
                           Interval.near_zero(1.0))
        except (UnboundedMassError, DivergentMomentError) as exc:
            raise SingularRegionError(
                f"kernel is singular inside the region: {exc}"
            ) from exc


# ---------------------------------------------------------------------------
# the Gaussian-exponential cross-term integral


def gaussian_exponential_integral(r: float) -> float:
    """int_0^inf exp(-(t^2 + r^2/t^2)) dt = (sqrt(pi)/2) exp(-2r), r >= 0."""
    if r < 0.0:
        raise ValueError("r must be nonnegative")
    return 0.5 * math.sqrt(math.pi) * math.exp(-2.0 * r)


def gaussian_exponential_integral_quadrature(r: float) -> float:
    """Direct adaptive quadrature of the left-hand side, for cross-checking."""
    if r < 0.0:
        raise ValueError("r must be nonnegative")
    f = lambda t: math.exp(-(t * t + (r * r) / (t * t))) if t > 0.0 else 0.0
    split = max(1.0, math.sqrt(r))
    v1, _ = integrate.quad(f, 0.0, split, limit=200, epsabs=1e-14, epsrel=1e-12)
    v2, _ = integrate.quad(f, split, math.inf, limit=200, epsabs=1e-14, epsrel=1e-12)
    return v1 + v2


# ---------------------------------------------------------------------------
# log-domain quadrature


def _safe_log(v: float) -> float:
    return math.log(v) if v > 0.0 else -math.inf


def _log_quad(log_f, lo: float, hi: float, grid: int = 257) -> float:
    """log of int_lo^hi exp(log_f(u)) du, stable under extreme dynamic range."""
    us = np.linspace(lo, hi, grid)
    vals = np.asarray([log_f(u) for u in us])
    if not np.any(np.isfinite(vals)):
        return -math.inf
    i = int(np.nanargmax(np.where(np.isfinite(vals), vals, -math.inf)))
    bracket_lo = us[max(i - 1, 0)]
    bracket_hi = us[min(i + 1, grid - 1)]
    if bracket_hi > bracket_lo:
        res = optimize.minimize_scalar(
            lambda u: -log_f(u), bounds=(bracket_lo, bracket_hi), method="bounded"
        )
        peak_u, peak = float(res.x), float(-res.fun)
    else:
        peak_u, peak = float(us[i]), float(vals[i])
    peak = max(peak, float(vals[i]))

    def shifted(u):
        lv = log_f(u) - peak
        return math.exp(lv) if lv > -745.0 else 0.0

    val, _ = integrate.quad(
        shifted, lo, hi, points=[peak_u], limit=400, epsabs=1e-16, epsrel=1e-11,
    )
    if val <= 0.0:
        return -math.inf
    return peak + math.log(val)
