"""Lyapunov spectrum by the tangent-flow / re-orthonormalization method.

State and a 4-vector tangent frame are advanced together with RK4; every
``renorm_interval`` the frame is re-orthonormalized by modified Gram-Schmidt
and the log stretches are accumulated. The first ``tangent_transient`` of
accumulation is discarded so the frame has aligned with the Oseledets
directions before averaging starts; ``total_time`` is the averaging window
that follows.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .model import ModelVariant, ParameterSet, as_state, system_functions

DEFAULT_ZERO_TOL = 6e-4


class Attractor(enum.Enum):
    FIXED_POINT = "FixedPoint"
    LIMIT_CYCLE = "LimitCycle"
    TORUS2 = "Torus2"
    TORUS3 = "Torus3"
    CHAOS = "Chaos"
    HYPERCHAOS = "Hyperchaos"
    UNCLASSIFIED = "Unclassified"

    @property
    def family(self) -> str:
        return _FAMILY[self]

    @property
    def quasi_periodic(self) -> bool:
        return self in (Attractor.TORUS2, Attractor.TORUS3)


_FAMILY = {
    Attractor.FIXED_POINT: "equilibrium",
    Attractor.LIMIT_CYCLE: "periodic",
    Attractor.TORUS2: "quasi-periodic",
    Attractor.TORUS3: "quasi-periodic",
    Attractor.CHAOS: "chaotic",
    Attractor.HYPERCHAOS: "chaotic",
    Attractor.UNCLASSIFIED: "unclassified",
}

_DIMENSION_LABEL = {
    Attractor.FIXED_POINT: 0,
    Attractor.LIMIT_CYCLE: 1,
    Attractor.TORUS2: 2,
    Attractor.TORUS3: 3,
}


class LyapunovError(RuntimeError):
    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


@dataclass(frozen=True)
class LyapunovConfig:
    transient: float = 5e3
    total_time: float = 2e5
    tangent_transient: float = 2e4
    renorm_interval: float = 1.0
    dt: float = 0.1
    zero_tolerance: float = DEFAULT_ZERO_TOL
    # max std of the windowed running estimates over the last half of the run
    convergence_threshold: float = 2e-4

    def __post_init__(self):
        if self.total_time < 1e4:
            raise ValueError("total_time must be at least 1e4")
        if self.transient < 0 or self.tangent_transient < 0:
            raise ValueError("transients must be nonnegative")
        for name in ("renorm_interval", "dt", "zero_tolerance", "convergence_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        ratio = self.renorm_interval / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("renorm_interval must be a whole multiple of dt")

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        return cls(**{k: float(mapping[k]) for k in cls.__dataclass_fields__ if k in mapping})


@dataclass(frozen=True)
class Classification:
    attractor: Attractor
    hausdorff_label: int | None
    kaplan_yorke: float | None
    n_zero: int
    n_positive: int
    pattern: str


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: np.ndarray
    zero_tolerance: float
    classification: Attractor
    hausdorff_label: int | None
    kaplan_yorke: float | None
    pattern: str
    trace_average: float
    convergence: float
    converged: bool
    final_state: np.ndarray
    times: np.ndarray
    running: np.ndarray

    @property
    def sum_rule_error(self) -> float:
        return float(abs(np.sum(self.exponents) - self.trace_average))


def kaplan_yorke(exponents) -> float:
    lam = np.sort(np.asarray(exponents, dtype=float))[::-1]
    csum = np.cumsum(lam)
    nonneg = np.nonzero(csum >= 0)[0]
    if nonneg.size == 0:
        return 0.0
    j = int(nonneg[-1]) + 1
    if j == lam.size:
        return float(lam.size)
    return j + float(csum[j - 1] / abs(lam[j]))


def classify(exponents, zero_tolerance: float = DEFAULT_ZERO_TOL) -> Classification:
    """Attractor type from the sign pattern with a zero band ``[-tol, tol]``."""
    lam = np.asarray(exponents, dtype=float)
    if lam.shape != (4,) or np.any(np.diff(lam) > 0):
        raise ValueError("expected four exponents sorted descending")
    signs = np.where(np.abs(lam) <= zero_tolerance, 0, np.sign(lam)).astype(int)
    pattern = "(" + ", ".join({1: "+", 0: "0", -1: "-"}[s] for s in signs) + ")"
    n_pos = int(np.sum(signs > 0))
    n_zero = int(np.sum(signs == 0))
    if n_pos == 0:
        att = {0: Attractor.FIXED_POINT, 1: Attractor.LIMIT_CYCLE,
               2: Attractor.TORUS2, 3: Attractor.TORUS3}.get(n_zero, Attractor.UNCLASSIFIED)
    elif n_zero >= 1 and signs[-1] < 0:
        att = Attractor.CHAOS if n_pos == 1 else Attractor.HYPERCHAOS
    else:
        att = Attractor.UNCLASSIFIED
    ky = kaplan_yorke(lam) if n_pos > 0 else None
    return Classification(att, _DIMENSION_LABEL.get(att), ky, n_zero, n_pos, pattern)


def _spectrum(rhs, jac, P, s0, cfg: LyapunovConfig) -> LyapunovSpectrum:
    spr = int(round(cfg.renorm_interval / cfg.dt))
    tau = spr * cfg.dt
    n_transient = int(round(cfg.transient / cfg.dt))
    k0 = int(round(cfg.tangent_transient / tau))
    n_renorm = k0 + int(round(cfg.total_time / tau))
    s0 = np.array(s0, dtype=np.float64)
    _, _, hist, trace_hist, y, status, r = _kernels.lyapunov_run(
        rhs, jac, P, s0, cfg.dt, n_transient, spr, n_renorm)
    if status != _kernels.OK:
        t_fail = cfg.transient + max(r, 0) * tau
        raise LyapunovError(f"{_kernels.STATUS_TEXT[status]} near t={t_fail:.6g}",
                            state=y, time=t_fail)

    times = tau * np.arange(1, n_renorm + 1)
    if k0 > 0:
        base, tbase, trace0 = hist[k0 - 1], times[k0 - 1], trace_hist[k0 - 1]
    else:
        base, tbase, trace0 = np.zeros(s0.size), 0.0, 0.0
    win_t = times[k0:] - tbase
    running = (hist[k0:] - base) / win_t[:, None]
    # raw accumulators follow Gram-Schmidt order; sort once at the end
    order = np.argsort(running[-1])[::-1]
    running = running[:, order]
    exponents = running[-1].copy()
    trace_avg = float((trace_hist[-1] - trace0) / win_t[-1])

    tail = running[running.shape[0] // 2:]
    conv = float(np.max(np.std(tail, axis=0)))
    converged = conv <= cfg.convergence_threshold
    c = classify(exponents, cfg.zero_tolerance)
    att = c.attractor if converged else Attractor.UNCLASSIFIED
    return LyapunovSpectrum(
        exponents=exponents, zero_tolerance=cfg.zero_tolerance, classification=att,
        hausdorff_label=c.hausdorff_label if converged else None,
        kaplan_yorke=c.kaplan_yorke, pattern=c.pattern, trace_average=trace_avg,
        convergence=conv, converged=converged, final_state=y,
        times=times[k0:] + cfg.transient, running=running,
    )


def spectrum_for_system(rhs, jac, params, s0, cfg: LyapunovConfig | None = None):
    """Spectrum of any jitted 4D ``rhs``/``jac`` pair (e.g. a linear test system)."""
    return _spectrum(rhs, jac, _kernels.params_array(params), s0, cfg or LyapunovConfig())


def lyapunov_spectrum(p: ParameterSet, s0, cfg: LyapunovConfig | None = None,
                      variant=ModelVariant.FULL) -> LyapunovSpectrum:
    rhs, jac = system_functions(variant)
    return _spectrum(rhs, jac, p.as_array(), as_state(s0), cfg or LyapunovConfig())


def lyapunov_batch(params, states, cfg: LyapunovConfig | None = None,
                   variant=ModelVariant.FULL, threads: int = 1):
    """Independent spectra for paired parameter sets and initial states.

    Kernels release the GIL, so ``threads > 1`` runs samples concurrently.
    Failed samples come back as the raised :class:`LyapunovError`.
    """
    cfg = cfg or LyapunovConfig()

    def one(args):
        p, s = args
        try:
            return lyapunov_spectrum(p, s, cfg, variant)
        except LyapunovError as exc:
            return exc

    jobs = list(zip(params, states))
    if threads <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, jobs))
