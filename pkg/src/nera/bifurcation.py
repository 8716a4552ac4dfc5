"""One-parameter sweeps in beta1: orbit peaks, regime labels and boundaries."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .integrate import IntegrationError, IntegratorConfig, find_peaks, integrate
from .lyapunov import Attractor, LyapunovConfig, LyapunovError, LyapunovSpectrum, lyapunov_spectrum
from .model import STATE_NAMES, ModelVariant, ParameterSet

WARM = "warm"
COLD = "cold"

EQUILIBRIUM = "equilibrium"
PERIODIC = "periodic"
APERIODIC = "aperiodic"

DEFAULT_S0 = (0.5, 0.1, 0.05, 0.01)

# long LCE runs are too costly per sample; a sweep uses a shorter window
SWEEP_LCE = LyapunovConfig(transient=0.0, total_time=5e4, tangent_transient=1e4)


@dataclass(frozen=True)
class SweepConfig:
    lo: float = 0.02
    hi: float = 0.8
    steps: int = 400
    obs: str = "N"
    transient: float = 5e3
    window: float = 2e3
    # long-period orbits: widen the window until this many peaks are seen
    min_peaks: int = 16
    max_window: float = 5e4
    # warm seeds are lifted to this floor so invariant faces cannot trap them
    seed_floor: float = 1e-6
    # windows that still look aperiodic are treated as transient up to this time
    max_transient: float = 5e4
    seeding: str = WARM
    s0: tuple = DEFAULT_S0
    dt: float = 0.05
    with_lce: bool = False
    lce: LyapunovConfig = SWEEP_LCE
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("sweep range must satisfy 0 < lo < hi")
        if int(self.steps) < 2:
            raise ValueError("steps must be >= 2")
        if self.obs not in STATE_NAMES:
            raise ValueError(f"obs must be one of {STATE_NAMES}")
        if self.seeding not in (WARM, COLD):
            raise ValueError("seeding must be 'warm' or 'cold'")
        if self.transient < 0 or self.window <= 0:
            raise ValueError("transient must be >= 0 and window > 0")
        if self.max_window < self.window:
            raise ValueError("max_window must be >= window")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "s0", tuple(float(v) for v in self.s0))

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)

    def as_dict(self):
        d = asdict(self)
        d["lce"] = self.lce.as_dict()
        return d


@dataclass(frozen=True)
class BifurcationSample:
    beta1: float
    peaks: np.ndarray | None
    amplitude: float = float("nan")
    spectrum: LyapunovSpectrum | None = None
    final_state: np.ndarray | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.peaks is None


@dataclass(frozen=True)
class BifurcationDiagram:
    observed_variable: str
    samples: tuple[BifurcationSample, ...]
    config: SweepConfig
    parameter_name: str = "beta1"
    base: ParameterSet | None = None

    @property
    def beta1(self) -> np.ndarray:
        return np.array([s.beta1 for s in self.samples])

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class Boundary:
    beta1: float
    left: float
    right: float
    left_regime: str
    right_regime: str

    def __float__(self):
        return self.beta1


def count_clusters(values, tol: float = 1e-3) -> int:
    """Greedy 1D clustering: a new cluster opens when a value is more than
    ``tol`` above the first member of the current one, so a dense band of
    width W yields about W/tol clusters rather than chaining into one."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return 0
    count, start = 1, v[0]
    for x in v[1:]:
        if x - start > tol:
            count += 1
            start = x
    return count


def peak_regime(peaks, amplitude, cluster_tol: float = 1e-3, max_clusters: int = 3,
                min_amplitude: float = 1e-6) -> str | None:
    """Regime from the peak set of the observed variable.

    Periodic means the peaks fall into at most ``max_clusters`` clusters and
    each cluster recurs (at least two peaks per cluster on average).
    """
    if peaks is None:
        return None
    if peaks.size == 0 or not amplitude > min_amplitude:
        return EQUILIBRIUM
    k = count_clusters(peaks, cluster_tol)
    if k <= max_clusters and 2 * k <= peaks.size:
        return PERIODIC
    return APERIODIC


def lce_regime(spectrum: LyapunovSpectrum | None) -> str | None:
    if spectrum is None:
        return None
    att = spectrum.classification
    if att is Attractor.UNCLASSIFIED:
        return None
    if att is Attractor.FIXED_POINT:
        return EQUILIBRIUM
    if att is Attractor.LIMIT_CYCLE:
        return PERIODIC
    return APERIODIC


def _window_peaks(p, s, window, cfg, variant):
    traj = integrate(p, s, IntegratorConfig(scheme="rk4", dt=cfg.dt, t_end=window), variant)
    x = traj.component(cfg.obs)
    _, peaks = find_peaks(traj.times, x)
    return peaks, float(x.max() - x.min()), traj.final_state


def _measure(p, s0, cfg: SweepConfig, variant):
    s = s0
    if cfg.transient > 0:
        s = integrate(p, s0, IntegratorConfig(scheme="rk4", dt=cfg.dt, t_end=cfg.transient,
                                              transient=cfg.transient), variant).final_state
    elapsed = cfg.transient
    while True:
        window = cfg.window
        peaks, amp, y = _window_peaks(p, s, window, cfg, variant)
        if 0 < peaks.size < cfg.min_peaks and cfg.max_window > window:
            window = min(cfg.max_window, 1.25 * window * cfg.min_peaks / peaks.size)
            peaks, amp, y = _window_peaks(p, s, window, cfg, variant)
        # slow relaxation mimics a spread peak set; keep going until it settles
        if peak_regime(peaks, amp) != APERIODIC or elapsed + window > cfg.max_transient:
            return peaks, amp, y
        elapsed += window
        s = y


def _sample(p_base, b, s0, cfg, variant):
    p = p_base.with_(beta1=float(b))
    try:
        peaks, amp, y = _measure(p, s0, cfg, variant)
    except IntegrationError as exc:
        return BifurcationSample(float(b), None, error=str(exc))
    return BifurcationSample(float(b), peaks, amp, final_state=y)


def _attach_lce(p_base, sample, cfg, variant):
    if sample.failed:
        return sample
    p = p_base.with_(beta1=sample.beta1)
    s = np.maximum(sample.final_state, cfg.seed_floor)
    try:
        spec = lyapunov_spectrum(p, s, cfg.lce, variant)
    except (LyapunovError, ValueError) as exc:
        return replace(sample, error=f"lce: {exc}")
    return replace(sample, spectrum=spec)


def sweep(p_base: ParameterSet, cfg: SweepConfig | None = None, variant=ModelVariant.FULL,
          progress=None) -> BifurcationDiagram:
    """Peak sets of ``cfg.obs`` along an evenly spaced beta1 grid.

    Warm seeding starts each sample from the previous final state (falling
    back to ``s0`` after a failure); cold seeding always starts from ``s0``
    and may run on several threads. A failed sample keeps ``peaks=None``.
    """
    cfg = cfg or SweepConfig()
    betas = cfg.values
    if cfg.seeding == COLD and cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            samples = list(pool.map(lambda b: _sample(p_base, b, cfg.s0, cfg, variant), betas))
    else:
        samples, s = [], np.array(cfg.s0)
        for i, b in enumerate(betas):
            smp = _sample(p_base, b, s, cfg, variant)
            samples.append(smp)
            if cfg.seeding == WARM:
                s = np.array(cfg.s0) if smp.failed else np.maximum(smp.final_state,
                                                                  cfg.seed_floor)
            if progress:
                progress(i, smp)
    if cfg.with_lce:
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                samples = list(pool.map(lambda sm: _attach_lce(p_base, sm, cfg, variant),
                                        samples))
        else:
            samples = [_attach_lce(p_base, sm, cfg, variant) for sm in samples]
    return BifurcationDiagram(cfg.obs, tuple(samples), cfg, base=p_base)


def regimes(d: BifurcationDiagram, criterion: str = "auto", **peak_opts) -> list[str | None]:
    if criterion == "auto":
        usable = [s for s in d.samples if not s.failed]
        criterion = "lce" if usable and all(s.spectrum is not None for s in usable) else "peaks"
    if criterion == "peaks":
        return [peak_regime(s.peaks, s.amplitude, **peak_opts) for s in d.samples]
    if criterion == "lce":
        return [lce_regime(s.spectrum) for s in d.samples]
    raise ValueError(f"unknown criterion {criterion!r}")


def detect_boundaries(d: BifurcationDiagram, criterion: str = "auto",
                      **peak_opts) -> list[Boundary]:
    """Midpoints between consecutive labelled samples whose regime differs.

    ``criterion`` is ``"peaks"``, ``"lce"`` or ``"auto"`` (LCE labels when
    every successful sample carries a spectrum). Unlabelled samples are
    skipped over.
    """
    labels = regimes(d, criterion, **peak_opts)
    out = []
    prev = None
    for smp, lab in zip(d.samples, labels):
        if lab is None:
            continue
        if prev is not None and lab != prev[1]:
            out.append(Boundary(0.5 * (prev[0] + smp.beta1), prev[0], smp.beta1, prev[1], lab))
        prev = (smp.beta1, lab)
    return out


def agreement(d: BifurcationDiagram, **peak_opts) -> float:
    """Fraction of samples where peak and LCE regime labels coincide."""
    a = regimes(d, "peaks", **peak_opts)
    b = regimes(d, "lce")
    pairs = [(x, y) for x, y in zip(a, b) if x is not None and y is not None]
    if not pairs:
        return float("nan")
    return sum(x == y for x, y in pairs) / len(pairs)
