"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes or lengths do not agree."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values (overflow, divergence)."""

    def __init__(self, message, epoch=None, step=None):
        where = []
        if epoch is not None:
            where.append(f"epoch={epoch}")
        if step is not None:
            where.append(f"step={step}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists every violation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnsupportedOperation(TypeError):
    """The operation is not defined for this kind of object."""
