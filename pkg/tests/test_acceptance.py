"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a ``CRITERION n: PASS|FAIL ...`` line; the lines are
printed together in the pytest terminal summary. Run only this file with
``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from nera.bifurcation import SweepConfig, detect_boundaries, sweep
from nera.calibration import CalibrationProblem, FREE_PARAMS, calibrate, simulate_series
from nera.equilibria import closed_form_equilibria
from nera.integrate import IntegratorConfig, convergence_order, find_peaks, integrate
from nera.bifurcation import count_clusters
from nera.lyapunov import lyapunov_spectrum
from nera.model import PRESETS, ModelVariant, jacobian, vector_field
from nera.stability import eigenvalues_at

from conftest import ACCEPTANCE_LINES, DEFAULT_S0, random_params


def record(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# published spectra and the attractor family of the table row holding each beta1
COLORADO_LCE = {
    0.30: ((0, -0.0022, -0.013, -0.029), "periodic"),
    0.35: ((0, 0, -0.0010, -0.065), "quasi-periodic"),
    0.40: ((0, -0.0011, -0.0011, -0.066), "periodic"),
    0.60: ((0, 0, -0.0017, -0.085), "quasi-periodic"),
}
WASHINGTON_LCE = {
    0.27: ((0, -0.0078, -0.0089, -0.019), "(0, -, -, -)"),
    0.34: ((0, 0, -0.010, -0.017), "(0, 0, -, -)"),
    0.345: ((0, 0, -0.0092, -0.016), "(0, 0, -, -)"),
    0.3485: ((0, 0, -0.011, -0.016), "(0, 0, -, -)"),
}

_SPECTRA = {}


def spectrum(name, beta1):
    key = (name, beta1)
    if key not in _SPECTRA:
        t = time.perf_counter()
        sp = lyapunov_spectrum(PRESETS[name].with_(beta1=beta1), DEFAULT_S0)
        _SPECTRA[key] = (sp, time.perf_counter() - t)
    return _SPECTRA[key]


def test_criterion_01_equilibrium_residuals():
    closed_form_equilibria(PRESETS["colorado"])  # warm caches
    t = time.perf_counter()
    worst, flags_ok = 0.0, True
    for p in PRESETS.values():
        eq = {r.label: r for r in closed_form_equilibria(p)}
        worst = max(worst, *(eq[k].residual for k in ("O", "I1", "I2", "J2")))
        h = p.h
        i2 = p.r1 - p.beta2 > 0 and p.r1 - p.beta2 * (1 + h) > 0
        j2 = p.alpha1 - p.beta4 > 0 and p.alpha1 - p.beta4 * (1 + h) > 0
        flags_ok &= eq["I2"].feasible == i2 and eq["J2"].feasible == j2
    elapsed = time.perf_counter() - t
    ok = worst < 1e-10 and flags_ok and elapsed < 1.0
    assert record(1, ok, f"max residual {worst:.2e}, feasibility flags match: {flags_ok}, "
                         f"{elapsed:.3f} s")


def test_criterion_02_analytic_eigenvalues():
    params = random_params(np.random.default_rng(2024), 100)
    t = time.perf_counter()
    worst = 0.0
    for p in params:
        eq = {r.label: r for r in closed_form_equilibria(p)}
        h = p.h
        refs = {"O": [p.beta1, -p.beta2, -p.beta3, -p.beta4],
                "I1": [-p.beta1, -p.beta2 + p.r1 / (h + 1), -p.beta3 + p.alpha2 / (h + 1),
                       -p.beta4 + p.alpha1 / (h + 1)]}
        for label, ref in refs.items():
            ev = eigenvalues_at(p, eq[label]).eigenvalues
            worst = max(worst, np.max(np.abs(np.sort(ev.real) - np.sort(ref))),
                        np.max(np.abs(ev.imag)))
    elapsed = time.perf_counter() - t
    ok = worst < 1e-12 and elapsed < 5.0
    assert record(2, ok, f"max |numeric - closed form| {worst:.2e} over 100 sets, "
                         f"{elapsed:.2f} s")


def test_criterion_03_jacobian_finite_differences():
    rng = np.random.default_rng(7)
    t = time.perf_counter()
    worst = 0.0
    for variant in ModelVariant:
        for p in PRESETS.values():
            for s in rng.uniform(0.01, 1.0, (100, 4)):
                J = jacobian(p, s, variant)
                Jfd = np.empty((4, 4))
                for j in range(4):
                    d = np.zeros(4)
                    d[j] = 1e-6
                    Jfd[:, j] = (vector_field(p, s + d, variant)
                                 - vector_field(p, s - d, variant)) / 2e-6
                worst = max(worst, np.max(np.abs(J - Jfd)) / np.max(np.abs(J)))
    elapsed = time.perf_counter() - t
    ok = worst < 1e-6 and elapsed < 5.0
    assert record(3, ok, f"max relative FD mismatch {worst:.2e} (both variants, 100 states "
                         f"each), {elapsed:.2f} s")


def test_criterion_04_colorado_spectra():
    parts, ok = [], True
    for b, (ref, family) in COLORADO_LCE.items():
        sp, dt = spectrum("colorado", b)
        dev = float(np.max(np.abs(sp.exponents - np.array(ref))))
        fam = sp.classification.family
        ok &= dev <= 0.005 and fam == family
        parts.append(f"{b}: {np.round(sp.exponents, 4).tolist()} {sp.classification.value} "
                     f"dev {dev:.4f} ({dt:.0f} s)")
    assert record(4, ok, "; ".join(parts))


def test_criterion_05_washington_spectra():
    parts, ok = [], True
    for b, (ref, pattern) in WASHINGTON_LCE.items():
        sp, dt = spectrum("washington", b)
        dev = float(np.max(np.abs(sp.exponents - np.array(ref))))
        ok &= dev <= 0.005 and sp.pattern == pattern
        parts.append(f"{b}: {np.round(sp.exponents, 4).tolist()} {sp.pattern} dev {dev:.4f}")
    assert record(5, ok, "; ".join(parts))


def test_criterion_06_sum_rule():
    for b in COLORADO_LCE:
        spectrum("colorado", b)
    for b in WASHINGTON_LCE:
        spectrum("washington", b)
    errs = [sp.sum_rule_error for sp, _ in _SPECTRA.values()]
    ok = max(errs) < 5e-3
    assert record(6, ok, f"max |sum(lambda) - <tr J>| {max(errs):.2e} over {len(errs)} runs")


SWEEPS = {
    "colorado": (SweepConfig(lo=0.02, hi=0.8, steps=400), (0.3175, 0.37, 0.55)),
    "washington": (SweepConfig(lo=0.02, hi=0.36, steps=341), (0.335, 0.357)),
}


def test_criterion_07_bifurcation_boundaries():
    ok, parts = True, []
    for name, (cfg, targets) in SWEEPS.items():
        t = time.perf_counter()
        found = [b.beta1 for b in detect_boundaries(sweep(PRESETS[name], cfg), "peaks")]
        hits = {x: any(abs(f - x) <= 0.02 for f in found) for x in targets}
        ok &= all(hits.values())
        miss = [x for x, h in hits.items() if not h]
        parts.append(f"{name} ({cfg.steps} samples, {time.perf_counter() - t:.0f} s) found "
                     f"{[round(f, 4) for f in found]}"
                     + (f", missed {miss}" if miss else ", all targets hit"))
    assert record(7, ok, "; ".join(parts))


def test_criterion_08_limit_cycles_are_periodic():
    ok, parts = True, []
    for name, b in (("colorado", 0.30), ("washington", 0.27)):
        p = PRESETS[name].with_(beta1=b)
        traj = integrate(p, DEFAULT_S0, IntegratorConfig(dt=0.02, t_end=1e4, transient=5e3))
        counts = {}
        for k in "NERA":
            x = traj.component(k)
            _, peaks = find_peaks(traj.times, x)
            counts[k] = (count_clusters(peaks, 1e-3), peaks.size, float(x.max() - x.min()))
        # a compartment that has died out is flat: no peaks at all
        good = all(c <= 3 and (amp < 1e-9 or (c >= 1 and n >= 2 * c))
                   for c, n, amp in counts.values())
        ok &= good
        parts.append(f"{name} {b}: clusters/peaks " + " ".join(
            f"{k}={c}/{n}" if amp >= 1e-9 else f"{k}=flat" for k, (c, n, amp) in counts.items()))
    assert record(8, ok, "; ".join(parts))


def test_criterion_09_integrator_orders():
    ok, parts = True, []
    for name, p in PRESETS.items():
        rk4 = convergence_order("rk4", p, DEFAULT_S0)
        dp54 = convergence_order("dp54", p, DEFAULT_S0)
        ok &= abs(rk4 - 4.0) <= 0.2 and abs(dp54 - 5.0) <= 0.3
        parts.append(f"{name} rk4 {rk4:.3f} dp54 {dp54:.3f}")
    assert record(9, ok, "; ".join(parts))


def test_criterion_10_ga_round_trip():
    ok, parts = True, []
    t0 = time.perf_counter()
    for name, p in PRESETS.items():
        series = simulate_series(p, (0.6, 0.2, 0.1, 0.05), np.arange(11.0))
        res = calibrate(CalibrationProblem(series))
        mono = bool(np.all(np.diff(res.best_history) <= 0))
        rel = np.abs(res.best.as_array()[:10] / p.as_array()[:10] - 1)
        close = int(np.sum(rel <= 0.1))
        ok &= res.fitness < 1e-6 and mono
        parts.append(f"{name} fitness {res.fitness:.2e} (GA alone {res.ga_fitness:.2e}), "
                     f"monotone {mono}, {close}/{len(FREE_PARAMS)} rates within 10%")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    assert record(10, ok, "; ".join(parts) + f"; {elapsed:.0f} s")


def test_criterion_11_reduced_boundedness():
    rng = np.random.default_rng(11)
    starts = rng.uniform(0.0, 1.0, (50, 4))
    starts[starts == 0.0] = 0.5
    worst = 0.0
    for p in PRESETS.values():
        for s in starts:
            traj = integrate(p, s, IntegratorConfig(t_end=1e4, record_stride=10),
                             ModelVariant.REDUCED)
            worst = max(worst, float(traj.states.max()))
    ok = worst < 10
    assert record(11, ok, f"max component {worst:.3f} over 2 x 50 starts, t = 1e4")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
