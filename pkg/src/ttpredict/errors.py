class TTPredictError(Exception):
    """Base class for package errors."""


class SchemaError(TTPredictError, ValueError):
    pass


class ParseError(TTPredictError, ValueError):
    pass


class PositivityError(TTPredictError, ValueError):
    """An arm is empty, so a conditional on treatment is undefined."""


class DomainError(TTPredictError, ValueError):
    """A probability or label lies outside its admissible range."""


class DegenerateArmError(TTPredictError, ValueError):
    pass


class EstimandUndefinedError(TTPredictError, ArithmeticError):
    pass


class UnsupportedKernelError(TTPredictError, TypeError):
    pass
