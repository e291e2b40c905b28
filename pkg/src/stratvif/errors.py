class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class SingularDesign(ArithmeticError):
    """The cross-product matrix of a design is numerically singular."""


class ConfoundedDesign(SingularDesign):
    """Treatment cannot be separated from the other model terms."""
