"""Simulation and analysis toolkit for the NERA drug-use predator-prey model."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    PRESETS,
    STATE_NAMES,
    ModelVariant,
    ParameterSet,
    holling2,
    jacobian,
    preset,
    vector_field,
)

__all__ = [
    "PRESETS",
    "STATE_NAMES",
    "ModelVariant",
    "ParameterSet",
    "__version__",
    "holling2",
    "jacobian",
    "preset",
    "vector_field",
]
