class NumericalError(ArithmeticError):
    """A decomposition failed to converge or an iterate became non-finite."""


class MatrixFormatError(ValueError):
    """Malformed matrix file; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
