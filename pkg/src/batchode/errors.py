"""Exception types raised by the batch integrators."""


class BatchOdeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidShape(BatchOdeError, ValueError):
    pass


class InvalidInterval(BatchOdeError, ValueError):
    pass


class InvalidStageCount(BatchOdeError, ValueError):
    pass


class StepSizeUnderflow(BatchOdeError, ArithmeticError):
    """Step size fell below the floor while the error test was still failing."""
