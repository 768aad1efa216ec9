"""Exception taxonomy shared across the package.

Every raised condition maps to one of these classes so the command-line
layer can translate failures into stable exit codes.
"""


class ShapeError(ValueError):
    """Operand extents or dtypes are incompatible with an operation."""


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


class GraphError(KeyError):
    """A node id does not belong to the tape it was used with."""


class ContractError(ValueError):
    """An operation was called outside its documented precondition."""


class FormatError(ValueError):
    """A serialized payload does not parse as the declared format."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where the math requires finite ones."""
