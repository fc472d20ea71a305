"""Finite Cartan pairs: Feldman-Moore relations, symbols and Schur multipliers."""

__version__ = "0.1.0"

from .relation import (  # noqa: E402
    Cocycle,
    FiniteSpace,
    FMRelation,
    Relation,
    validate_cocycle,
    validate_relation,
)
from .symbols import build_operator, star_product, symbol_of  # noqa: E402
from .schur import apply_multiplier, cb_norm_estimate, multiplier_norm, recover_symbol  # noqa: E402
from .eh import EhTensor, eh_norm, gamma2  # noqa: E402

__all__ = [
    "__version__",
    "Cocycle",
    "EhTensor",
    "FMRelation",
    "FiniteSpace",
    "Relation",
    "apply_multiplier",
    "build_operator",
    "cb_norm_estimate",
    "eh_norm",
    "gamma2",
    "multiplier_norm",
    "recover_symbol",
    "star_product",
    "symbol_of",
    "validate_cocycle",
    "validate_relation",
]
