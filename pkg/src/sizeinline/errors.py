"""Exception hierarchy shared across the package."""


class SizeInlineError(Exception):
    """Base class for every error raised by this package."""


class ModuleError(SizeInlineError):
    """A module graph is malformed or an operation on it is invalid."""


class InvalidCallSiteError(ModuleError):
    pass


class RecursionRefusedError(ModuleError):
    pass


class UnknownFunctionError(ModuleError, KeyError):
    pass


class FormatError(SizeInlineError, ValueError):
    """A text document (module, policy, log) could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParameterError(SizeInlineError, ValueError):
    pass


class NumericError(SizeInlineError, ArithmeticError):
    """Non-finite values appeared in a policy or a training update."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class DepthExceededError(SizeInlineError):
    pass
