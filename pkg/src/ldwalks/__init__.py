"""Large deviations of heavy-tailed stopped random walks: simulation, transforms, predictions."""

from .asymptotics import LDPrediction, ladder_survival
from .processes import AbsValue, Additive, Identical, Independent, TailEstimate
from .sampling import (
    Deterministic,
    Exponential,
    MittagLeffler,
    Pareto,
    Rademacher,
    RngStream,
    SymmetricPareto,
    TruncatedPareto,
    law_from_dict,
)

__version__ = "0.1.0"

__all__ = [
    "AbsValue",
    "Additive",
    "Deterministic",
    "Exponential",
    "Identical",
    "Independent",
    "LDPrediction",
    "MittagLeffler",
    "Pareto",
    "Rademacher",
    "RngStream",
    "SymmetricPareto",
    "TailEstimate",
    "TruncatedPareto",
    "ladder_survival",
    "law_from_dict",
]
