"""Time integration: fixed-step RK4 and adaptive Dormand-Prince 5(4)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .model import ModelVariant, ParameterSet, as_state, system_functions

RK4 = "rk4"
DP54 = "dp54"
SCHEMES = (RK4, DP54)

_DP54_CHUNK = 1 << 16


class IntegrationError(RuntimeError):
    """Integrator abort; ``trajectory`` holds everything recorded so far."""

    def __init__(self, message, trajectory=None, t_fail=None, state=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.t_fail = t_fail
        self.state = state


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = RK4
    dt: float = 0.05
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    dt_min: float = 1e-10
    dt_max: float = 1.0
    t_end: float = 1e4
    transient: float = 0.0
    record_stride: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        for name in ("dt", "abs_tol", "rel_tol", "dt_min", "dt_max", "t_end"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        if not 0 <= self.transient <= self.t_end:
            raise ValueError("transient must lie in [0, t_end]")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        kwargs = {}
        for f in cls.__dataclass_fields__.values():
            if f.name in mapping:
                raw = mapping[f.name]
                kwargs[f.name] = raw if f.name == "scheme" else (
                    int(raw) if f.name == "record_stride" else float(raw))
        return cls(**kwargs)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.times, self.states):
            arr.setflags(write=False)

    def __len__(self):
        return self.times.shape[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1].copy()

    def component(self, name: str) -> np.ndarray:
        return self.states[:, "NERA".index(name)]

    def at(self, t) -> np.ndarray:
        """Linear interpolation between recorded samples."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.states[:, k]) for k in range(4)],
                        axis=-1)


def _rk4(rhs, P, s0, cfg, t0=0.0):
    span = cfg.t_end
    n = max(1, int(round(span / cfg.dt)))
    dt = span / n
    record_from = min(n, int(math.ceil(cfg.transient / dt - 1e-9)))
    stride = int(cfg.record_stride)
    cap = (n - record_from) // stride + 1
    out_t = np.empty(cap)
    out_y = np.empty((cap, s0.shape[0]))
    m, status, last, y = _kernels.rk4_run(rhs, P, s0, t0, dt, n, record_from, stride,
                                          out_t, out_y)
    meta = {"integrator": RK4, "dt": dt, "steps": int(last), "rejected_steps": 0}
    return out_t[:m], out_y[:m], status, t0 + last * dt, y, meta


def _dp54(rhs, P, s0, cfg, t0=0.0):
    t_end = t0 + cfg.t_end
    record_from = t0 + cfg.transient
    ts, ys = [], []
    if cfg.transient <= 0:
        ts.append(np.array([t0]))
        ys.append(s0[None, :].copy())
    t, y, dt = t0, s0.copy(), 0.0
    n_acc = n_rej = 0
    while True:
        out_t = np.empty(_DP54_CHUNK)
        out_y = np.empty((_DP54_CHUNK, s0.shape[0]))
        m, status, t, y, dt, a, r = _kernels.dp54_run(
            rhs, P, y, t, t_end, dt, cfg.abs_tol, cfg.rel_tol, cfg.dt_min,
            cfg.dt_max, record_from, out_t, out_y)
        n_acc += a
        n_rej += r
        ts.append(out_t[:m])
        ys.append(out_y[:m])
        if status != _kernels.BUFFER_FULL:
            break
    meta = {"integrator": DP54, "abs_tol": cfg.abs_tol, "rel_tol": cfg.rel_tol,
            "steps": int(n_acc), "rejected_steps": int(n_rej), "last_dt": float(dt)}
    return np.concatenate(ts), np.concatenate(ys), status, t, y, meta


def integrate_system(rhs, params, s0, cfg: IntegratorConfig, t0: float = 0.0) -> Trajectory:
    """Integrate any jitted ``rhs(P, s, out)`` system over ``[t0, t0 + t_end]``.

    Only samples at or after ``t0 + transient`` are kept. Raises
    :class:`IntegrationError` (with the partial trajectory attached) on step
    underflow or when the state leaves the nonnegative cone.
    """
    P = _kernels.params_array(params)
    s0 = np.array(s0, dtype=np.float64)
    run = _rk4 if cfg.scheme == RK4 else _dp54
    times, states, status, t_last, y_last, meta = run(rhs, P, s0, cfg, t0)
    meta["status"] = _kernels.STATUS_TEXT[status]
    traj = Trajectory(times.copy(), states.copy(), meta)
    if status != _kernels.OK:
        raise IntegrationError(
            f"{meta['status']} at t={t_last:.6g} (state {np.array2string(y_last, precision=4)})",
            trajectory=traj, t_fail=t_last, state=y_last)
    return traj


def integrate(p: ParameterSet, s0, cfg: IntegratorConfig | None = None,
              variant=ModelVariant.FULL) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    rhs, _ = system_functions(variant)
    traj = integrate_system(rhs, p.as_array(), as_state(s0), cfg)
    traj.meta["variant"] = ModelVariant.parse(variant).value
    return traj


def advance(rhs, P, s0, t_span, dt):
    """Final RK4 state after ``t_span`` without recording anything."""
    n = max(1, int(round(t_span / dt)))
    out_t = np.empty(0)
    out_y = np.empty((0, len(s0)))
    _, status, last, y = _kernels.rk4_run(rhs, P, np.array(s0, dtype=np.float64), 0.0,
                                          t_span / n, n, n + 1, 1, out_t, out_y)
    if status != _kernels.OK:
        raise IntegrationError(f"{_kernels.STATUS_TEXT[status]} at step {last}",
                               t_fail=last * t_span / n, state=y)
    return y


def _fixed_step_final(scheme, rhs, P, s0, horizon, dt):
    n = int(round(horizon / dt))
    if scheme == RK4:
        return advance(rhs, P, s0, horizon, dt)
    return _kernels.dp5_fixed(rhs, P, np.array(s0, dtype=np.float64), horizon / n, n)


def convergence_order(scheme, p, s0, horizon: float = 10.0, dt: float | None = None,
                      variant=ModelVariant.FULL, rhs=None) -> float:
    """Observed order of accuracy by step halving.

    Errors for steps ``dt, dt/2, dt/4`` are taken against a ``dt/64``
    reference of the same scheme, and the order is the least-squares slope of
    log-error against log-step. DP54 is run with fixed steps here since the
    propagated solution is the 5th-order one. ``p`` may be a
    :class:`ParameterSet` or, together with ``rhs``, a raw parameter array.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if rhs is None:
        rhs, _ = system_functions(variant)
        P = p.as_array()
    else:
        P = _kernels.params_array(p)
    if dt is None:
        # large starting states leave dt = 0.5 outside the asymptotic range
        dt = 0.25
    s0 = np.array(s0, dtype=np.float64)
    ref = _fixed_step_final(scheme, rhs, P, s0, horizon, dt / 64)
    steps = np.array([dt, dt / 2, dt / 4])
    errs = np.array([np.max(np.abs(_fixed_step_final(scheme, rhs, P, s0, horizon, h) - ref))
                     for h in steps])
    drift = np.max(np.abs(ref - s0))
    floor = 2.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(ref))))
    if drift < 1e-12 or np.any(errs <= floor):
        raise ValueError("discretization error is at round-off level (constant or "
                         "equilibrium trajectory); convergence order is undefined")
    slope, _ = np.polyfit(np.log(steps), np.log(errs), 1)
    return float(slope)


def find_peaks(times, values, min_prominence: float = 1e-12):
    """Local maxima refined by a parabola through the three bracketing samples.

    A sample counts when it exceeds both neighbours by at least
    ``min_prominence`` (plateaus of equal samples are not peaks). Returns
    ``(peak_times, peak_values)``.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(values, dtype=float)
    if x.size < 3:
        return np.empty(0), np.empty(0)
    mid = x[1:-1]
    idx = np.nonzero((mid - x[:-2] >= min_prominence) & (mid - x[2:] >= min_prominence))[0] + 1
    if idx.size == 0:
        return np.empty(0), np.empty(0)
    t0, t1, t2 = t[idx - 1], t[idx], t[idx + 1]
    x0, x1, x2 = x[idx - 1], x[idx], x[idx + 1]
    # vertex of the interpolating parabola on a possibly uneven grid
    d1 = (x1 - x0) / (t1 - t0)
    d2 = (x2 - x1) / (t2 - t1)
    a = (d2 - d1) / (t2 - t0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tv = 0.5 * (t0 + t1) - d1 / (2.0 * a)
        xv = x1 + d1 * (tv - t1) + a * (tv - t0) * (tv - t1)
    ok = (a < 0) & (tv >= t0) & (tv <= t2) & np.isfinite(xv)
    tv = np.where(ok, tv, t1)
    xv = np.where(ok, np.maximum(xv, x1), x1)
    return tv, xv
