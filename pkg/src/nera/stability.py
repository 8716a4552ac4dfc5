"""Linear stability of fixed points from the analytic Jacobian."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .equilibria import EquilibriumReport
from .model import ModelVariant, ParameterSet, jacobian

MARGINAL = 1e-9


class StabilityClass(enum.Enum):
    SINK = "Sink"
    SOURCE = "Source"
    SADDLE = "Saddle"
    SADDLE_FOCUS = "SaddleFocus"
    CENTER_LIKE = "CenterLike"


class StabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class StabilityReport:
    equilibrium: EquilibriumReport
    eigenvalues: np.ndarray
    classification: StabilityClass
    margin: float

    @property
    def n_unstable(self) -> int:
        return int(np.sum(self.eigenvalues.real > MARGINAL))


def sort_eigenvalues(ev) -> np.ndarray:
    """Real part descending, ties broken by imaginary part descending."""
    ev = np.asarray(ev, dtype=complex)
    return ev[np.lexsort((-ev.imag, -ev.real))]


def classify_eigenvalues(ev, marginal: float = MARGINAL) -> StabilityClass:
    re = np.real(ev)
    if np.any(np.abs(re) < marginal):
        return StabilityClass.CENTER_LIKE
    if np.all(re < 0):
        return StabilityClass.SINK
    if np.all(re > 0):
        return StabilityClass.SOURCE
    if np.any(np.abs(np.imag(ev)) > marginal):
        return StabilityClass.SADDLE_FOCUS
    return StabilityClass.SADDLE


def eigenvalues_at(p: ParameterSet, e: EquilibriumReport, variant=ModelVariant.FULL,
                   marginal: float = MARGINAL) -> StabilityReport:
    if not np.isfinite(e.residual) or e.residual >= 1e-8:
        raise ValueError(f"{e.label} is not an equilibrium (residual {e.residual:.3g})")
    try:
        ev = np.linalg.eigvals(jacobian(p, e.state, variant))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise StabilityError(f"eigensolver failed at {e.label}: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise StabilityError(f"eigensolver returned non-finite values at {e.label}")
    ev = sort_eigenvalues(ev)
    return StabilityReport(e, ev, classify_eigenvalues(ev, marginal),
                           float(np.min(np.abs(ev.real))))
