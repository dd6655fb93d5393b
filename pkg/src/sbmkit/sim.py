"""Seeded Monte Carlo for pure-jump subordinated Brownian motion.

Paths are event-driven: a zero-drift subordinator with finite (or truncated)
activity jumps at exponential times, and each subordinator jump of size s
displaces the spatial process by sqrt(s) times a standard d-dimensional
Gaussian.  Between events the position is constant, so first-exit times and
occupation functionals are computed exactly per path, with no discretization
error.  Everything is reproducible from (seed, stream index): paths are
processed in fixed-size chunks, each on its own child stream, and results
merge by sufficient statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import special

from .errors import (
    DivergentMomentError,
    DriftPathsUnsupportedError,
    ToolkitError,
    TruncationRequiredError,
)
from .measure import AtomicSum, ExponentialMixture, SubordinatorSpec
from .recipe import CatalogExample, catalog

CHUNK = 65_536  # paths per RNG child stream; fixed so results never depend on workers


@dataclass(frozen=True)
class RngStream:
    """Root seed plus stream index; same pair => bit-identical draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        )

    def chunk_generator(self, chunk: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, chunk))
        )


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if not self.radius >= 0.0:
            raise ValueError("radius must be nonnegative")

    @property
    def dimension(self) -> int:
        return len(self.center)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        delta = pts - np.asarray(self.center)
        return np.einsum("ij,ij->i", delta, delta) < self.radius * self.radius

    def nearest_distance(self, x) -> float:
        return max(float(np.linalg.norm(np.asarray(x, float) - self.center)) - self.radius, 0.0)

    def farthest_distance(self, x) -> float:
        return float(np.linalg.norm(np.asarray(x, float) - self.center)) + self.radius


@dataclass(frozen=True)
class TruncationPolicy:
    """Keep atoms/components up to `max_index` and/or with size >= `size_floor`."""

    max_index: int | None = None
    size_floor: float | None = None


@dataclass(frozen=True)
class JumpChain:
    start: np.ndarray
    times: np.ndarray
    sizes: np.ndarray
    displacements: np.ndarray
    positions: np.ndarray
    horizon: float
    omitted_rate: float
    omitted_mass_rate: float

    def exit_scan(self, domain) -> tuple[float, np.ndarray] | None:
        """Brute-force first exit over the stored events: (time, position)."""
        for k in range(len(self.times)):
            if not bool(domain.contains(self.positions[k][None, :])[0]):
                return float(self.times[k]), self.positions[k]
        return None


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    count: int
    confidence: float = 0.99
    censored: float = 0.0
    flagged: bool = False

    def ci(self) -> tuple[float, float]:
        z = float(special.ndtri(0.5 + 0.5 * self.confidence))
        return self.mean - z * self.stderr, self.mean + z * self.stderr

    def binomial_ci(self) -> tuple[float, float]:
        """Clopper-Pearson interval; for indicator estimates near 0 or 1."""
        from scipy import stats

        k = round(self.mean * self.count)
        n = self.count
        a = 1.0 - self.confidence
        lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
        hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
        return lo, hi


@dataclass
class RunningStat:
    """Mergeable sufficient statistics (count, sum, sum of squares)."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add_array(self, xs: np.ndarray) -> None:
        self.count += int(xs.size)
        self.total += float(np.sum(xs))
        self.total_sq += float(np.sum(xs * xs))

    def merge(self, other: "RunningStat") -> "RunningStat":
        return RunningStat(
            self.count + other.count,
            self.total + other.total,
            self.total_sq + other.total_sq,
        )

    def estimate(self, confidence: float = 0.99, censored: float = 0.0,
                 flagged: bool = False) -> Estimate:
        n = self.count
        if n == 0:
            return Estimate(math.nan, math.nan, 0, confidence, censored, True)
        mean = self.total / n
        var = max(self.total_sq / n - mean * mean, 0.0) * (n / max(n - 1, 1))
        return Estimate(mean, math.sqrt(var / n), n, confidence, censored, flagged)


# ---------------------------------------------------------------------------
# component tables


@dataclass(frozen=True)
class _CompTable:
    rates: np.ndarray
    scales: np.ndarray
    exponential_sizes: bool
    total_rate: float
    omitted_rate: float
    omitted_mass_rate: float


def _resolve_components(spec: SubordinatorSpec, truncation: TruncationPolicy | None) -> _CompTable:
    if spec.drift != 0.0:
        raise DriftPathsUnsupportedError(
            "path simulation supports zero-drift subordinators only"
        )
    spec.require_valid()
    trunc = truncation or TruncationPolicy()
    meas = spec.measure
    if isinstance(meas, AtomicSum):
        rates = np.asarray(meas.weights)
        scales = np.asarray(meas.locations)
        expo = False
    elif isinstance(meas, ExponentialMixture):
        rates = np.asarray(meas.weights)
        scales = np.asarray(meas.scales)
        expo = True
    else:
        raise ToolkitError("general-density subordinators have no event sampler")

    keep = np.ones(len(rates), dtype=bool)
    if trunc.max_index is not None:
        keep[trunc.max_index + 1:] = False
    if trunc.size_floor is not None:
        keep &= scales >= trunc.size_floor
    omitted_rate = float(np.sum(rates[~keep]))
    omitted_mass = float(np.sum(rates[~keep] * scales[~keep]))
    if isinstance(meas, AtomicSum) and meas.tail is not None:
        cut = len(meas.weights) - 1
        try:
            omitted_rate += meas.tail.power_sum(cut, 0.0)
        except DivergentMomentError:
            omitted_rate = math.inf
        try:
            omitted_mass += meas.tail.power_sum(cut, 1.0)
        except DivergentMomentError:
            omitted_mass = math.inf

    rates, scales = rates[keep], scales[keep]
    total = float(np.sum(rates))
    if not (total > 0.0 and math.isfinite(total)):
        if total == 0.0:
            return _CompTable(rates, scales, expo, 0.0, omitted_rate, omitted_mass)
        raise TruncationRequiredError("post-truncation jump rate is not finite")
    return _CompTable(rates, scales, expo, total, omitted_rate, omitted_mass)


def default_truncation(example: CatalogExample, n: int) -> TruncationPolicy:
    """Smallest prefix whose omitted mass rate is < 1e-9 of the scale under study."""
    meas = example.spec.measure
    if not isinstance(meas, AtomicSum) or meas.tail is None:
        return TruncationPolicy()
    target = 1e-9 * example._band(n)
    for k in range(n, len(meas.weights)):
        try:
            if meas.tail and _tail_mass_beyond(meas, k) < target:
                return TruncationPolicy(max_index=k)
        except DivergentMomentError:
            break
    return TruncationPolicy()


def _tail_mass_beyond(meas: AtomicSum, k: int) -> float:
    explicit = float(np.sum(np.asarray(meas.weights[k + 1:]) * np.asarray(meas.locations[k + 1:])))
    return explicit + meas.tail.power_sum(len(meas.weights) - 1, 1.0)


# ---------------------------------------------------------------------------
# event and chain sampling


@dataclass(frozen=True)
class SubordinatorEvents:
    times: np.ndarray
    sizes: np.ndarray
    omitted_rate: float
    omitted_mass_rate: float


def _sample_events(table: _CompTable, horizon: float,
                   gen: np.random.Generator) -> SubordinatorEvents:
    times, sizes = [], []
    for rate, scale in zip(table.rates, table.scales):
        k = int(gen.poisson(rate * horizon))
        t = np.sort(gen.uniform(0.0, horizon, k))
        s = scale * gen.standard_exponential(k) if table.exponential_sizes \
            else np.full(k, scale)
        times.append(t)
        sizes.append(s)
    t_all = np.concatenate(times) if times else np.zeros(0)
    s_all = np.concatenate(sizes) if sizes else np.zeros(0)
    order = np.argsort(t_all, kind="stable")
    return SubordinatorEvents(
        t_all[order], s_all[order], table.omitted_rate, table.omitted_mass_rate
    )


def sample_subordinator_events(
    spec: SubordinatorSpec,
    horizon: float,
    rng: RngStream,
    truncation: TruncationPolicy | None = None,
) -> SubordinatorEvents:
    """Superposed per-component Poisson events up to the horizon, time-sorted."""
    table = _resolve_components(spec, truncation)
    return _sample_events(table, horizon, rng.generator())


def sample_sbm_chain(
    spec: SubordinatorSpec,
    dimension: int,
    horizon: float,
    rng: RngStream,
    truncation: TruncationPolicy | None = None,
    start=None,
) -> JumpChain:
    """One event path: each subordinator jump s displaces by sqrt(s) * N(0, I_d)."""
    table = _resolve_components(spec, truncation)
    gen = rng.generator()
    events = _sample_events(table, horizon, gen)
    x0 = np.zeros(dimension) if start is None else np.asarray(start, dtype=float)
    z = gen.standard_normal((len(events.sizes), dimension))
    disp = np.sqrt(events.sizes)[:, None] * z
    pos = x0[None, :] + np.cumsum(disp, axis=0)
    return JumpChain(
        start=x0, times=events.times, sizes=events.sizes,
        displacements=disp, positions=pos, horizon=horizon,
        omitted_rate=events.omitted_rate, omitted_mass_rate=events.omitted_mass_rate,
    )


# ---------------------------------------------------------------------------
# vectorized exit walk


@dataclass
class WalkResult:
    paths: int
    exited: int
    censored: int
    hit_stat: RunningStat = field(default_factory=RunningStat)
    functional_stat: RunningStat = field(default_factory=RunningStat)
    diff_stat: RunningStat = field(default_factory=RunningStat)

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.paths if self.paths else math.nan


def _walk_chunk(
    table: _CompTable,
    dimension: int,
    start: np.ndarray,
    domain,
    target,
    n: int,
    gen: np.random.Generator,
    g: Callable[[np.ndarray], np.ndarray] | None,
    max_events: int,
    horizon: float,
    result: WalkResult,
) -> None:
    pos = np.repeat(start[None, :], n, axis=0)
    t = np.zeros(n)
    acc = np.zeros(n) if g is not None else None
    hit = np.zeros(n, dtype=bool)
    done_exit = np.zeros(n, dtype=bool)
    done_censor = np.zeros(n, dtype=bool)
    alive = np.arange(n)
    lam = table.total_rate
    probs = table.rates / lam
    ncomp = len(probs)

    for _ in range(max_events):
        k = alive.size
        if k == 0:
            break
        dt = gen.exponential(1.0 / lam, k)
        comp = gen.choice(ncomp, size=k, p=probs)
        sizes = table.scales[comp]
        if table.exponential_sizes:
            sizes = sizes * gen.standard_exponential(k)
        z = gen.standard_normal((k, dimension))

        if g is not None:
            held = np.minimum(dt, horizon - t[alive]) if math.isfinite(horizon) else dt
            acc[alive] += held * g(pos[alive])
        newt = t[alive] + dt
        over = newt > horizon if math.isfinite(horizon) else np.zeros(k, dtype=bool)

        newpos = pos[alive] + np.sqrt(sizes)[:, None] * z
        inside = domain.contains(newpos)
        exiting = ~inside & ~over
        if np.any(exiting):
            out_idx = alive[exiting]
            done_exit[out_idx] = True
            hit[out_idx] = target.contains(newpos[exiting])
        if np.any(over):
            done_censor[alive[over]] = True

        surviving = inside & ~over
        pos[alive[surviving]] = newpos[surviving]
        t[alive[surviving]] = newt[surviving]
        alive = alive[surviving]

    done_censor[alive] = True

    result.paths += n
    result.exited += int(done_exit.sum())
    result.censored += int(done_censor.sum())
    result.hit_stat.add_array(hit[done_exit].astype(float))
    if g is not None:
        f = acc[done_exit]
        result.functional_stat.add_array(f)
        result.diff_stat.add_array(hit[done_exit].astype(float) - f)


def _run_walk(
    spec: SubordinatorSpec,
    dimension: int,
    domain,
    target,
    start,
    paths: int,
    rng: RngStream,
    truncation: TruncationPolicy | None = None,
    g: Callable[[np.ndarray], np.ndarray] | None = None,
    max_events: int = 1000,
    horizon: float = math.inf,
) -> WalkResult:
    x0 = np.asarray(start, dtype=float)
    if x0.shape != (dimension,):
        raise ValueError("start point has the wrong dimension")
    if not bool(domain.contains(x0[None, :])[0]):
        raise ValueError("start point must lie inside the domain")
    table = _resolve_components(spec, truncation)
    if table.total_rate == 0.0:
        raise ToolkitError("measure has no jumps after truncation; paths never move")
    result = WalkResult(paths=0, exited=0, censored=0)
    for chunk_idx, offset in enumerate(range(0, paths, CHUNK)):
        n = min(CHUNK, paths - offset)
        gen = rng.chunk_generator(chunk_idx)
        _walk_chunk(table, dimension, x0, domain, target, n, gen, g,
                    max_events, horizon, result)
    return result


# ---------------------------------------------------------------------------
# estimators


def estimate_exit_distribution(
    spec: SubordinatorSpec,
    dimension: int,
    domain,
    target,
    start,
    paths: int,
    rng: RngStream,
    truncation: TruncationPolicy | None = None,
    max_events: int = 1000,
    horizon: float = math.inf,
    censor_threshold: float = 0.01,
    confidence: float = 0.99,
) -> Estimate:
    """P_x( X at the first exit of `domain` lands in `target` ).

    Censored paths (event cap or horizon reached before exit) are excluded
    from the mean and reported; the result is flagged when their fraction
    exceeds the threshold.
    """
    res = _run_walk(spec, dimension, domain, target, start, paths, rng,
                    truncation=truncation, max_events=max_events, horizon=horizon)
    frac = res.censored_fraction
    return res.hit_stat.estimate(confidence, censored=frac,
                                 flagged=frac > censor_threshold)


def estimate_exit_functional(
    spec: SubordinatorSpec,
    dimension: int,
    domain,
    g: Callable[[np.ndarray], np.ndarray],
    start,
    paths: int,
    rng: RngStream,
    truncation: TruncationPolicy | None = None,
    max_events: int = 1000,
    horizon: float = math.inf,
    censor_threshold: float = 0.01,
    confidence: float = 0.99,
) -> Estimate:
    """E_x of the integral of g(X_t) dt up to the first exit of `domain`.

    Exact per path: piecewise-constant chains turn the integral into a sum of
    holding-time * g(position) terms.
    """
    null_target = Ball(tuple([0.0] * dimension), 0.0)
    res = _run_walk(spec, dimension, domain, null_target, start, paths, rng,
                    truncation=truncation, g=g, max_events=max_events, horizon=horizon)
    frac = res.censored_fraction
    return res.functional_stat.estimate(confidence, censored=frac,
                                        flagged=frac > censor_threshold)


def exit_indicator_and_functional(
    spec: SubordinatorSpec,
    dimension: int,
    domain,
    target,
    start,
    g: Callable[[np.ndarray], np.ndarray],
    paths: int,
    rng: RngStream,
    truncation: TruncationPolicy | None = None,
    max_events: int = 1000,
    horizon: float = math.inf,
    confidence: float = 0.99,
) -> tuple[Estimate, Estimate, Estimate]:
    """Both sides of the exit identity on common paths: (indicator, functional, difference)."""
    res = _run_walk(spec, dimension, domain, target, start, paths, rng,
                    truncation=truncation, g=g, max_events=max_events, horizon=horizon)
    frac = res.censored_fraction
    return (
        res.hit_stat.estimate(confidence, censored=frac),
        res.functional_stat.estimate(confidence, censored=frac),
        res.diff_stat.estimate(confidence, censored=frac),
    )


def estimate_escape_probability(
    example: str | CatalogExample,
    n: int,
    paths: int,
    rng: RngStream,
    alpha: float = 1.0 / 20.0,
    dimension: int | None = None,
    confidence: float = 0.99,
    max_events: int = 1000,
) -> Estimate:
    """P_0( X at the first exit of B(0, alpha R_n) lands in B(0, 10 R_n) )."""
    ex = catalog(example) if isinstance(example, str) else example
    d = ex.default_dimension if dimension is None else dimension
    r = ex.radius(n, d)
    domain = Ball(tuple([0.0] * d), alpha * r)
    target = Ball(tuple([0.0] * d), 10.0 * r)
    trunc = default_truncation(ex, n)
    return estimate_exit_distribution(
        ex.spec, d, domain, target, np.zeros(d), paths, rng,
        truncation=trunc, max_events=max_events, confidence=confidence,
    )
