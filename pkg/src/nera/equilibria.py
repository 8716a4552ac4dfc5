"""Fixed points: closed forms for O, I1, I2, J2 and damped Newton for the rest."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import ModelVariant, ParameterSet, system_functions

CONVERGED_RESIDUAL = 1e-10
DEDUP_TOL = 1e-6
MAX_ITER = 100
MAX_HALVINGS = 20


@dataclass(frozen=True)
class Condition:
    name: str
    expression: str
    margin: float

    @property
    def passed(self) -> bool:
        return bool(self.margin > 0)


@dataclass(frozen=True)
class EquilibriumReport:
    label: str
    state: np.ndarray
    residual: float
    feasible: bool
    conditions: tuple[Condition, ...] = ()
    converged: bool = True
    iterations: int = 0
    note: str = ""

    def condition(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def conditions_hold(self) -> bool:
        return all(c.passed for c in self.conditions)


@dataclass(frozen=True)
class EquilibriumSet:
    """Deduplicated numeric equilibria plus bookkeeping on failed seeds."""

    reports: tuple[EquilibriumReport, ...]
    n_seeds: int
    n_failed: int

    def __iter__(self):
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)

    def labels(self) -> list[str]:
        return [r.label for r in self.reports]


def _f(rhs, P, s):
    out = np.empty(4)
    rhs(P, np.ascontiguousarray(s, dtype=np.float64), out)
    return out


def _J(jac, P, s):
    J = np.empty((4, 4))
    jac(P, np.ascontiguousarray(s, dtype=np.float64), J)
    return J


def residual(p: ParameterSet, s, variant=ModelVariant.FULL) -> float:
    """Max-norm of the vector field; defined for states outside the cone too."""
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        return float("inf")
    rhs, _ = system_functions(variant)
    return float(np.max(np.abs(_f(rhs, p.as_array(), s))))


def _feasible(s) -> bool:
    return bool(np.all(np.isfinite(s)) and np.all(s >= 0.0))


def i2_conditions(p: ParameterSet) -> tuple[Condition, ...]:
    h = p.h
    return (
        Condition("r1-beta2>0", "r1 - beta2 > 0", p.r1 - p.beta2),
        Condition("r1-beta2(1+h)>0", "r1 - beta2*(1+h) > 0", p.r1 - p.beta2 * (1 + h)),
        Condition("oscillatory", "h*r1 < r1 - beta2*(1+h)",
                  p.r1 - p.beta2 * (1 + h) - h * p.r1),
    )


def j2_conditions(p: ParameterSet) -> tuple[Condition, ...]:
    h = p.h
    return (
        Condition("alpha1-beta4>0", "alpha1 - beta4 > 0", p.alpha1 - p.beta4),
        Condition("alpha1-beta4(1+h)>0", "alpha1 - beta4*(1+h) > 0",
                  p.alpha1 - p.beta4 * (1 + h)),
        Condition("oscillatory", "h*alpha1 < alpha1 - beta4*(1+h)",
                  p.alpha1 - p.beta4 * (1 + h) - h * p.alpha1),
    )


def _existence_ok(conditions) -> bool:
    # the oscillation test is reported but is not needed for existence
    return all(c.passed for c in conditions[:2])


def _planar_point(label, p, rate, quit, slot, conditions, variant, denominator_sign=-1.0):
    """Predator-prey fixed point in the (N, X) plane shared by I2 and J2."""
    h, b1 = p.h, p.beta1
    gap = rate - quit
    nan = np.full(4, np.nan)
    if gap == 0.0:
        return EquilibriumReport(label, nan, float("inf"), False, conditions, False, 0,
                                 "singular closed form (influence rate equals quit rate)")
    n_star = quit * h / gap
    x_star = b1 * h * (rate - quit * (1 + h)) / (rate + denominator_sign * quit) ** 2
    s = np.zeros(4)
    s[0] = n_star
    s[slot] = x_star
    res = residual(p, s, variant)
    feasible = _feasible(s) and _existence_ok(conditions)
    return EquilibriumReport(label, s, res, feasible, conditions, True, 0)


def j2_candidates(p: ParameterSet, variant=ModelVariant.FULL):
    """Both J2 forms: ``(alpha1 - beta4)^2`` and ``(alpha1 + beta4)^2`` denominators."""
    cond = j2_conditions(p)
    minus = _planar_point("J2", p, p.alpha1, p.beta4, 3, cond, variant, -1.0)
    plus = _planar_point("J2", p, p.alpha1, p.beta4, 3, cond, variant, +1.0)
    return minus, plus


def _choose_j2(p, variant):
    minus, plus = j2_candidates(p, variant)
    if not np.isfinite(minus.residual):
        return minus
    note_bits = [f"(alpha1-beta4)^2 form residual {minus.residual:.3g}",
                 f"(alpha1+beta4)^2 form residual {plus.residual:.3g}"]
    if plus.residual < CONVERGED_RESIDUAL and plus.residual <= minus.residual:
        chosen, used = plus, "(alpha1+beta4)^2"
    else:
        chosen, used = minus, "(alpha1-beta4)^2"
    note = f"A* denominator {used}; " + "; ".join(note_bits)
    return EquilibriumReport(chosen.label, chosen.state, chosen.residual, chosen.feasible,
                             chosen.conditions, chosen.converged, 0, note)


def closed_form_equilibria(p: ParameterSet, variant=ModelVariant.FULL) -> list[EquilibriumReport]:
    out = []
    for label, s in (("O", np.zeros(4)), ("I1", np.array([1.0, 0.0, 0.0, 0.0]))):
        out.append(EquilibriumReport(label, s, residual(p, s, variant), True))
    out.append(_planar_point("I2", p, p.r1, p.beta2, 1, i2_conditions(p), variant))
    if ModelVariant.parse(variant) is ModelVariant.FULL:
        out.append(_choose_j2(p, variant))
    return out


def newton(p: ParameterSet, seed, variant=ModelVariant.FULL, free=(0, 1, 2, 3),
           max_iter: int = MAX_ITER, tol: float = CONVERGED_RESIDUAL):
    """Damped Newton on the components listed in ``free`` (others held fixed).

    Returns ``(state, residual, iterations, converged, note)``. Steps are
    halved up to 20 times while the residual fails to decrease.
    """
    rhs, jac = system_functions(variant)
    P = p.as_array()
    idx = np.asarray(free)
    x = np.array(seed, dtype=np.float64)

    def res_of(s):
        with np.errstate(all="ignore"):
            r = np.max(np.abs(_f(rhs, P, s)[idx]))
        return r if np.isfinite(r) else np.inf

    r = res_of(x)
    for it in range(max_iter + 1):
        if r < tol:
            return x, residual(p, x, variant), it, True, ""
        if it == max_iter:
            break
        Jr = _J(jac, P, x)[np.ix_(idx, idx)]
        fr = _f(rhs, P, x)[idx]
        try:
            if not np.isfinite(np.linalg.cond(Jr)) or np.linalg.cond(Jr) > 1e14:
                raise np.linalg.LinAlgError
            step = np.linalg.solve(Jr, -fr)
        except np.linalg.LinAlgError:
            return x, residual(p, x, variant), it, False, f"singular Jacobian at iteration {it}"
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = x.copy()
            trial[idx] += lam * step
            r_trial = res_of(trial)
            if r_trial < r:
                break
            lam *= 0.5
        else:
            return x, residual(p, x, variant), it, False, f"line search stalled at iteration {it}"
        x, r = trial, r_trial
    return x, residual(p, x, variant), max_iter, False, f"no convergence in {max_iter} iterations"


def find_I3(p: ParameterSet, seed, variant=ModelVariant.FULL,
            max_iter: int = MAX_ITER) -> EquilibriumReport:
    """Interior-of-face point ``(N, E, R, 0)`` by Newton on the A = 0 subsystem."""
    seed = np.array(seed, dtype=np.float64)
    if seed.shape != (4,) or seed[3] != 0.0:
        raise ValueError("I3 seed must be a 4-vector with A = 0")
    if np.any(seed[:3] < 0):
        raise ValueError("I3 seed components must be nonnegative")
    x, res, it, ok, note = newton(p, seed, variant, free=(0, 1, 2), max_iter=max_iter)
    if ok and abs(x[2]) < 1e-12:
        note = "R* = 0: coincides with the I2 branch"
    return EquilibriumReport("I3", x, res, ok and _feasible(x), (), ok, it, note)


def _label_numeric(p, s, closed, variant):
    for rep in closed:
        if np.all(np.isfinite(rep.state)) and np.max(np.abs(rep.state - s)) < 1e-8:
            return rep.label
    if s[3] == 0.0 and np.all(s[:3] > 0):
        return "I3"
    return "Numeric"


def find_all_numeric(p: ParameterSet, grid: int | np.ndarray = 5,
                     variant=ModelVariant.FULL) -> EquilibriumSet:
    """Newton from every seed of a tensor grid over [0, 1]^4.

    ``grid`` is a point count per axis or an explicit ``(n, 4)`` seed array.
    Converged points are deduplicated at 1e-6 (max-norm) and sorted
    lexicographically by state.
    """
    if np.isscalar(grid):
        axis = np.linspace(0.0, 1.0, int(grid))
        seeds = np.array(list(itertools.product(axis, repeat=4)))
    else:
        seeds = np.asarray(grid, dtype=np.float64).reshape(-1, 4)
    closed = closed_form_equilibria(p, variant)
    found: list[np.ndarray] = []
    iters: list[int] = []
    failed = 0
    for seed in seeds:
        x, res, it, ok, _ = newton(p, seed, variant)
        if not ok or res >= CONVERGED_RESIDUAL:
            failed += 1
            continue
        x = np.where(np.abs(x) < 1e-14, 0.0, x)
        if any(np.max(np.abs(x - y)) <= DEDUP_TOL for y in found):
            continue
        found.append(x)
        iters.append(it)
    order = sorted(range(len(found)), key=lambda k: tuple(found[k]))
    reports = tuple(
        EquilibriumReport(_label_numeric(p, found[k], closed, variant), found[k],
                          residual(p, found[k], variant), _feasible(found[k]), (), True,
                          iters[k])
        for k in order
    )
    return EquilibriumSet(reports, len(seeds), failed)
