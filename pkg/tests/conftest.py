"""Shared oracles and strategies."""

import numpy as np
import pytest
from hypothesis import strategies as st

from nera.model import PRESETS, ParameterSet

PRESET_NAMES = sorted(PRESETS)
DEFAULT_S0 = (0.5, 0.1, 0.05, 0.01)


def oracle_field(p, s):
    """Expanded right-hand side written out term by term, independent of the package."""
    N, E, R, A = (float(v) for v in s)
    h = p.h
    pn, pe, pr = N / (h + N), E / (h + E), R / (h + R)
    dN = p.beta1 * N * (1 - N) - p.r1 * pn * E - p.alpha1 * pn * A - p.alpha2 * pn * R
    dE = p.r1 * pn * E - p.r2 * pe * R - p.beta2 * E - p.gamma1 * pe * A
    dR = p.r2 * pe * R - p.beta3 * R - p.r3 * pr * A + p.alpha2 * pn * R
    dA = p.r3 * pr * A - p.beta4 * A + p.alpha1 * pn * A + p.gamma1 * pe * A
    return np.array([dN, dE, dR, dA])


def fd_jacobian(f, s, eps=1e-6):
    """Central differences, column by column."""
    s = np.asarray(s, dtype=float)
    J = np.empty((s.size, s.size))
    for j in range(s.size):
        d = np.zeros(s.size)
        d[j] = eps * max(1.0, abs(s[j]))
        J[:, j] = (f(s + d) - f(s - d)) / (2 * d[j])
    return J


rate = st.floats(min_value=0.005, max_value=0.8, allow_nan=False, allow_infinity=False)


@st.composite
def parameter_sets(draw, h=None):
    vals = {k: draw(rate) for k in ("beta1", "beta2", "beta3", "beta4", "r1", "r2", "r3",
                                    "alpha1", "alpha2", "gamma1")}
    vals["h"] = draw(st.floats(0.1, 2.0)) if h is None else h
    return ParameterSet(**vals)


states = st.lists(st.floats(min_value=0.0, max_value=1.5, allow_nan=False), min_size=4,
                  max_size=4).map(np.array)


def random_params(rng, n):
    out = []
    for _ in range(n):
        v = rng.uniform(0.005, 0.8, 10)
        out.append(ParameterSet.from_array(np.append(v, rng.uniform(0.1, 2.0))))
    return out


@pytest.fixture(params=PRESET_NAMES)
def preset_params(request):
    return PRESETS[request.param]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
