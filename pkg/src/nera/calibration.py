"""Real-coded genetic algorithm fitting the ten rates to prevalence series."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from . import _kernels
from ._kernels import PARAM_ORDER
from .io import ConfigError, read_kv
from .model import DEFAULT_H, STATE_NAMES, ModelVariant, ParameterSet, system_functions

FREE_PARAMS = tuple(k for k in PARAM_ORDER if k != "h")
DEFAULT_BOUNDS = {k: (1e-6, 1.0) for k in FREE_PARAMS}


@dataclass(frozen=True)
class ObservedSeries:
    """Sample times and an ``(n, 4)`` value table; NaN marks a missing entry."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (t.size, 4):
            raise ValueError(f"values must have shape ({t.size}, 4), got {v.shape}")
        if t.size < 3:
            raise ValueError("at least 3 time points are required")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly ascending")
        obs = v[~np.isnan(v)]
        if np.any(obs < 0) or np.any(obs > 1):
            raise ValueError("observed values must lie in [0, 1]")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def mask(self) -> np.ndarray:
        """Compartments with at least one observation."""
        return ~np.all(np.isnan(self.values), axis=0)

    @classmethod
    def from_csv(cls, path) -> "ObservedSeries":
        path = Path(path)
        try:
            fh = open(path, newline="", encoding="utf-8")
        except OSError as exc:
            raise ConfigError(str(path), None, None, f"cannot read: {exc.strerror}") from None
        with fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["t", *STATE_NAMES]:
            raise ConfigError(str(path), 1, None, "header must be t,N,E,R,A")
        times, values = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not any(c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ConfigError(str(path), lineno, None, f"expected 5 columns, got {len(row)}")
            try:
                times.append(float(row[0]))
                values.append([float(c) if c.strip() else np.nan for c in row[1:]])
            except ValueError as exc:
                raise ConfigError(str(path), lineno, None, str(exc)) from None
        try:
            return cls(np.array(times), np.array(values).reshape(-1, 4))
        except ValueError as exc:
            raise ConfigError(str(path), None, None, str(exc)) from None

    def to_rows(self):
        for t, row in zip(self.times, self.values):
            yield [t, *(None if np.isnan(v) else v for v in row)]


def load_bounds(path) -> dict[str, tuple[float, float]]:
    """Bounds file: one ``name = lo, hi`` line per free parameter (others default)."""
    entries = read_kv(path)
    bounds = dict(DEFAULT_BOUNDS)
    for key, raw in entries.items():
        if key not in FREE_PARAMS:
            raise ConfigError(str(path), raw.line, key, "not a calibrated parameter")
        try:
            lo, hi = (float(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(str(path), raw.line, key, "expected 'lo, hi'") from None
        if not 0 < lo < hi:
            raise ConfigError(str(path), raw.line, key, "bounds must satisfy 0 < lo < hi")
        bounds[key] = (lo, hi)
    return bounds


@dataclass(frozen=True)
class CalibrationProblem:
    series: ObservedSeries
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    h: float = DEFAULT_H
    weights: tuple = (1.0, 1.0, 1.0, 1.0)
    # fills compartments missing from the first sample
    fill: tuple = (0.0, 0.0, 0.0, 0.0)
    dt: float = 0.05
    variant: ModelVariant = ModelVariant.FULL
    # optional per-compartment switch on top of the series' own missing values
    mask: tuple | None = None

    def __post_init__(self):
        if self.mask is not None and len(self.mask) != 4:
            raise ValueError("mask must have one flag per compartment")
        missing = set(FREE_PARAMS) - set(self.bounds)
        if missing:
            raise ValueError(f"bounds missing for {sorted(missing)}")
        for k, (lo, hi) in self.bounds.items():
            if not 0 < lo < hi:
                raise ValueError(f"bounds for {k} must satisfy 0 < lo < hi")
        if self.h <= 0 or self.dt <= 0:
            raise ValueError("h and dt must be positive")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.bounds[k][0] for k in FREE_PARAMS])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.bounds[k][1] for k in FREE_PARAMS])

    @property
    def initial_state(self) -> np.ndarray:
        first = self.series.values[0]
        return np.where(np.isnan(first), np.asarray(self.fill, dtype=float), first)

    @property
    def fit_mask(self) -> np.ndarray:
        m = self.series.mask
        return m if self.mask is None else m & np.asarray(self.mask, dtype=bool)

    def to_params(self, x) -> ParameterSet:
        return ParameterSet(**dict(zip(FREE_PARAMS, map(float, x))), h=self.h)

    def from_params(self, p: ParameterSet) -> np.ndarray:
        return np.array([getattr(p, k) for k in FREE_PARAMS])


def _residuals(prob: CalibrationProblem, x):
    """Weighted residual vector, or None when the integration fails."""
    rhs, _ = system_functions(prob.variant)
    P = np.empty(len(PARAM_ORDER))
    P[:-1] = x
    P[-1] = prob.h
    times = prob.series.times
    out = np.empty((times.size, 4))
    status, _ = _kernels.rk4_sample(rhs, P, prob.initial_state, times, prob.dt, out)
    if status != _kernels.OK:
        return None
    obs = prob.series.values
    w = np.sqrt(np.asarray(prob.weights, dtype=float))
    diff = np.where(np.isnan(obs) | ~prob.fit_mask, 0.0, out - np.nan_to_num(obs))
    r = (w * diff).ravel()
    return r if np.all(np.isfinite(r)) else None


def _sse(prob: CalibrationProblem, x) -> float:
    r = _residuals(prob, x)
    return float("inf") if r is None else float(r @ r)


def fitness(candidate: ParameterSet, prob: CalibrationProblem) -> float:
    """Weighted SSE at the sample times; ``inf`` if the integration fails."""
    if candidate.h != prob.h:
        raise ValueError("candidate h differs from the problem's fixed h")
    return _sse(prob, prob.from_params(candidate))


def simulate_series(p: ParameterSet, s0, times, dt: float = 0.05,
                    variant=ModelVariant.FULL) -> ObservedSeries:
    """Noise-free synthetic observations of all four compartments."""
    rhs, _ = system_functions(variant)
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, 4))
    status, _ = _kernels.rk4_sample(rhs, p.as_array(), np.asarray(s0, dtype=float),
                                    times, dt, out)
    if status != _kernels.OK:
        raise RuntimeError(f"simulation failed: {_kernels.STATUS_TEXT[status]}")
    return ObservedSeries(times, out)


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 200
    generations: int = 300
    crossover_rate: float = 0.9
    blend_alpha: float = 0.5
    mutation_rate: float = 0.1
    mutation_scale: float = 0.05
    elitism_count: int = 2
    tournament_size: int = 3
    rng_seed: int = 42
    threads: int = 1
    # bounded least-squares refinement of the best individual after the GA
    polish: int = 1

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mutation_scale <= 0 or self.blend_alpha < 0:
            raise ValueError("mutation_scale must be > 0 and blend_alpha >= 0")
        if not 0 <= self.elitism_count < self.population_size:
            raise ValueError("elitism_count must lie in [0, population_size)")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must lie in [1, population_size]")

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping, source="<mapping>"):
        kwargs = {}
        for f in cls.__dataclass_fields__.values():
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            try:
                kwargs[f.name] = float(raw) if f.type == "float" else int(raw)
            except ValueError:
                raise ConfigError(source, getattr(raw, "line", None), f.name,
                                  f"bad value {raw!r}") from None
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(source, None, None, str(exc)) from None


@dataclass(frozen=True)
class CalibrationResult:
    best: ParameterSet
    fitness: float
    best_history: np.ndarray
    mean_history: np.ndarray
    evaluations: int
    ga_fitness: float
    polished: bool


def polish(prob: CalibrationProblem, x0, max_nfev: int = 2000):
    """Trust-region least squares inside the bounds, started at ``x0``."""
    n_res = prob.series.values.size

    def fun(x):
        r = _residuals(prob, x)
        # a failed integration gets a large flat residual so the step is rejected
        return np.full(n_res, 1e3) if r is None else r

    sol = least_squares(fun, np.clip(x0, prob.lower, prob.upper),
                        bounds=(prob.lower, prob.upper), method="trf",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    return sol.x, _sse(prob, sol.x), int(sol.nfev)


def _tournament(rng, fit, k):
    idx = rng.integers(0, fit.size, size=k)
    return idx[np.argmin(fit[idx])]


def calibrate(prob: CalibrationProblem, ga: GAConfig | None = None,
              progress=None) -> CalibrationResult:
    """Tournament selection, blend crossover, clipped Gaussian mutation, elitism.

    Generation 1 is the uniformly random initial population. All randomness
    comes from one generator seeded with ``ga.rng_seed`` and is consumed
    before each generation's (optionally threaded) evaluation. With
    ``ga.polish`` the best individual is finally refined by bounded least
    squares; ``best_history`` covers the GA generations only.
    ``progress(gen, best_fitness, population)`` is called once per generation,
    counting from 0.
    """
    ga = ga or GAConfig()
    rng = np.random.default_rng(ga.rng_seed)
    lo, hi = prob.lower, prob.upper
    width = hi - lo
    n, dim = ga.population_size, lo.size

    pool = ThreadPoolExecutor(max_workers=ga.threads) if ga.threads > 1 else None

    def evaluate(pop):
        if pool is None:
            return np.array([_sse(prob, x) for x in pop])
        return np.array(list(pool.map(lambda x: _sse(prob, x), pop)))

    try:
        pop = lo + rng.random((n, dim)) * width
        fit = evaluate(pop)
        evals = n
        best_hist, mean_hist = [], []
        best_i = int(np.argmin(fit))
        best_x, best_f = pop[best_i].copy(), float(fit[best_i])

        def record():
            finite = fit[np.isfinite(fit)]
            best_hist.append(best_f)
            mean_hist.append(float(finite.mean()) if finite.size else float("inf"))

        record()
        if progress:
            progress(0, best_f, pop)
        for gen in range(1, ga.generations):
            order = np.argsort(fit, kind="stable")
            children = [pop[i].copy() for i in order[:ga.elitism_count]]
            while len(children) < n:
                a = pop[_tournament(rng, fit, ga.tournament_size)]
                b = pop[_tournament(rng, fit, ga.tournament_size)]
                if rng.random() < ga.crossover_rate:
                    cmin, cmax = np.minimum(a, b), np.maximum(a, b)
                    span = cmax - cmin
                    c_lo = cmin - ga.blend_alpha * span
                    c_hi = cmax + ga.blend_alpha * span
                    pair = (c_lo + rng.random(dim) * (c_hi - c_lo),
                            c_lo + rng.random(dim) * (c_hi - c_lo))
                else:
                    pair = (a.copy(), b.copy())
                for c in pair:
                    hit = rng.random(dim) < ga.mutation_rate
                    c = c + hit * rng.normal(0.0, ga.mutation_scale * width)
                    children.append(np.clip(c, lo, hi))
            pop = np.array(children[:n])
            fit = evaluate(pop)
            evals += n
            i = int(np.argmin(fit))
            if fit[i] < best_f:
                best_x, best_f = pop[i].copy(), float(fit[i])
            record()
            if progress:
                progress(gen, best_f, pop)
    finally:
        if pool is not None:
            pool.shutdown()

    ga_f, polished = best_f, False
    if ga.polish and np.isfinite(best_f):
        x, f, nfev = polish(prob, best_x)
        evals += nfev
        if f < best_f:
            best_x, best_f, polished = x, f, True
    return CalibrationResult(prob.to_params(best_x), best_f, np.array(best_hist),
                             np.array(mean_hist), evals, ga_f, polished)
