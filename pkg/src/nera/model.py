"""NERA predator-prey vector field, Jacobian and parameter sets.

State vectors are plain ``numpy`` arrays ordered ``(N, E, R, A)``: non-users,
experimental, recreational and addicted users as population fractions.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import _kernels
from ._kernels import PARAM_ORDER
from .io import ConfigError, read_kv, write_kv

STATE_NAMES = ("N", "E", "R", "A")
DEFAULT_H = 0.5


class ModelVariant(enum.Enum):
    FULL = "full"
    # alpha1 = alpha2 = gamma1 = 0: only the chain N <- E <- R <- A remains
    REDUCED = "reduced"

    @classmethod
    def parse(cls, value) -> "ModelVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown model variant {value!r}") from None


@dataclass(frozen=True)
class ParameterSet:
    """The eleven positive rates of the model.

    ``beta1`` is the logistic growth rate of non-users, ``beta2..beta4`` the
    quit rates of E, R, A; ``r1, r2, r3`` the influence of E on N, R on E
    and A on R; ``alpha1``/``alpha2`` the influence of A/R on N; ``gamma1``
    the influence of A on E; ``h`` the shared half-saturation constant.
    """

    beta1: float
    beta2: float
    beta3: float
    beta4: float
    r1: float
    r2: float
    r3: float
    alpha1: float
    alpha2: float
    gamma1: float
    h: float = DEFAULT_H

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            try:
                v = float(v)
            except (TypeError, ValueError):
                raise ValueError(f"{f.name} must be a number, got {v!r}") from None
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"{f.name} must be strictly positive, got {v!r}")
            object.__setattr__(self, f.name, v)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in PARAM_ORDER], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "ParameterSet":
        return cls(**dict(zip(PARAM_ORDER, (float(v) for v in values))))

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def with_(self, **changes) -> "ParameterSet":
        return replace(self, **changes)

    @classmethod
    def from_mapping(cls, mapping, source: str = "<mapping>") -> "ParameterSet":
        """Build from string or float values, e.g. a parsed config file.

        Keys other than parameter names are ignored; ``h`` defaults to 1/2.
        """
        values = {}
        for key in PARAM_ORDER:
            if key not in mapping:
                if key == "h":
                    continue
                raise ConfigError(source, None, key, "missing parameter")
            raw = mapping[key]
            try:
                values[key] = float(raw)
            except ValueError:
                raise ConfigError(source, getattr(raw, "line", None), key,
                                  f"not a number: {raw!r}") from None
        try:
            return cls(**values)
        except ValueError as exc:
            raise ConfigError(source, None, None, str(exc)) from None

    @classmethod
    def load(cls, path) -> "ParameterSet":
        entries = read_kv(path)
        unknown = sorted(set(entries) - set(PARAM_ORDER))
        if unknown:
            key = unknown[0]
            raise ConfigError(str(path), entries[key].line, key, "unknown key")
        return cls.from_mapping(entries, source=str(path))

    def save(self, path, header: str | None = None) -> None:
        write_kv(path, self.as_dict(), header=header)


# Calibrated rate sets; the published alpha3 column is stored as gamma1.
PRESETS = {
    "colorado": ParameterSet(
        r1=0.44, r2=0.193, r3=0.029, alpha1=0.103, alpha2=0.043, gamma1=0.031,
        beta1=0.042, beta2=0.016, beta3=0.052, beta4=0.047, h=0.5,
    ),
    "washington": ParameterSet(
        r1=0.38, r2=0.142, r3=0.034, alpha1=0.099, alpha2=0.112, gamma1=0.032,
        beta1=0.015, beta2=0.03, beta3=0.066, beta4=0.039, h=0.5,
    ),
}


def preset(name: str) -> ParameterSet:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def as_state(s) -> np.ndarray:
    """Validate and copy a state into a float64 array of length 4."""
    arr = np.array(s, dtype=np.float64).reshape(-1)
    if arr.shape != (4,):
        raise ValueError(f"state must have 4 components (N, E, R, A), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("state components must be finite")
    if np.any(arr < 0.0):
        raise ValueError(f"state must lie in the nonnegative cone, got {arr}")
    return arr


def holling2(x: float, h: float) -> float:
    """Holling type II response ``x / (h + x)``; equals 1/2 at ``x == h``."""
    if h <= 0:
        raise ValueError("half-saturation h must be positive")
    if x < 0:
        raise ValueError("population fraction must be nonnegative")
    return x / (h + x)


def holling2_prime(x: float, h: float) -> float:
    if h <= 0:
        raise ValueError("half-saturation h must be positive")
    if x < 0:
        raise ValueError("population fraction must be nonnegative")
    return h / (h + x) ** 2


@_kernels.jit
def reduced_rhs(P, s, out):
    # same operation order as nera_rhs so the two agree bit for bit
    b1 = P[0]; b2 = P[1]; b3 = P[2]; b4 = P[3]
    r1 = P[4]; r2 = P[5]; r3 = P[6]; h = P[10]
    N = s[0]; E = s[1]; R = s[2]; A = s[3]
    p1 = N / (h + N)
    p2 = E / (h + E)
    p3 = R / (h + R)
    out[0] = b1 * N * (1.0 - N) - r1 * p1 * E
    out[1] = r1 * p1 * E - r2 * p2 * R - b2 * E
    out[2] = r2 * p2 * R - b3 * R - r3 * p3 * A
    out[3] = r3 * p3 * A - b4 * A


@_kernels.jit
def reduced_jac(P, s, J):
    b1 = P[0]; b2 = P[1]; b3 = P[2]; b4 = P[3]
    r1 = P[4]; r2 = P[5]; r3 = P[6]; h = P[10]
    N = s[0]; E = s[1]; R = s[2]; A = s[3]
    p1 = N / (h + N)
    p2 = E / (h + E)
    p3 = R / (h + R)
    d1 = h / ((h + N) * (h + N))
    d2 = h / ((h + E) * (h + E))
    d3 = h / ((h + R) * (h + R))
    J[0, 0] = b1 * (1.0 - 2.0 * N) - (r1 * E) * d1
    J[0, 1] = -r1 * p1
    J[0, 2] = 0.0
    J[0, 3] = 0.0
    J[1, 0] = r1 * E * d1
    J[1, 1] = -b2 + r1 * p1 - (r2 * R) * d2
    J[1, 2] = -r2 * p2
    J[1, 3] = 0.0
    J[2, 0] = 0.0
    J[2, 1] = r2 * R * d2
    J[2, 2] = -b3 + r2 * p2 - r3 * A * d3
    J[2, 3] = -r3 * p3
    J[3, 0] = 0.0
    J[3, 1] = 0.0
    J[3, 2] = r3 * A * d3
    J[3, 3] = -b4 + r3 * p3


def system_functions(variant=ModelVariant.FULL):
    """Jitted ``(rhs, jac)`` pair for a model variant."""
    variant = ModelVariant.parse(variant)
    if variant is ModelVariant.FULL:
        return _kernels.nera_rhs, _kernels.nera_jac
    return reduced_rhs, reduced_jac


def vector_field(p: ParameterSet, s, variant=ModelVariant.FULL) -> np.ndarray:
    """Time derivatives ``(dN/dt, dE/dt, dR/dt, dA/dt)`` at state ``s``."""
    rhs, _ = system_functions(variant)
    out = np.empty(4)
    rhs(p.as_array(), as_state(s), out)
    return out


def jacobian(p: ParameterSet, s, variant=ModelVariant.FULL) -> np.ndarray:
    _, jac = system_functions(variant)
    J = np.empty((4, 4))
    jac(p.as_array(), as_state(s), J)
    return J
