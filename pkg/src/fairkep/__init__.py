"""fairkep: fair lotteries over kidney-exchange packings."""

from .core import (
    Chain,
    Cycle,
    KepInstance,
    Lottery,
    Packing,
    StructurePolicy,
    eval_metric,
    lorenz_compare,
    validate_packing,
)

__all__ = [
    "Chain",
    "Cycle",
    "KepInstance",
    "Lottery",
    "Packing",
    "StructurePolicy",
    "eval_metric",
    "lorenz_compare",
    "validate_packing",
]

__version__ = "0.1.0"
