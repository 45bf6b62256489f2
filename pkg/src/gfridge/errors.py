"""Exception hierarchy.

``InputError`` covers everything the CLI maps to exit status 1.
"""


class InputError(ValueError):
    """Invalid user input: shapes, ranges, mismatched options."""


class SingularityError(InputError):
    """A requested solve is undefined on a rank-deficient design."""


class PreconditionError(InputError):
    """An operation's documented precondition does not hold."""


class DomainError(InputError):
    """Argument outside the domain where a transform is implemented."""


class DegenerateInputError(InputError):
    """A ratio has a zero denominator."""


class NumericError(ArithmeticError):
    """A spectral function produced non-finite values."""
