"""Exact-arithmetic toolkit for Bernoulli measures on the Cantor space."""

from cantorkit.numberfield import (
    AlgebraicField,
    FieldElement,
    MinimalPolynomial,
    make_field,
)

__all__ = ["AlgebraicField", "FieldElement", "MinimalPolynomial", "make_field"]
