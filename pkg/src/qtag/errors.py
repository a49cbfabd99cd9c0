"""Exception hierarchy shared by every qtag module."""


class QTagError(Exception):
    """Base class for all errors raised by qtag."""


class QasmSyntaxError(QTagError, ValueError):
    pass


class QubitOutOfRange(QTagError, ValueError):
    pass


class DuplicateOperand(QTagError, ValueError):
    pass


class UnsupportedGate(QTagError, ValueError):
    pass


class InvalidCircuit(QTagError, ValueError):
    """Grid violates partner-token completeness or token range."""


class TooManyQubits(QTagError, ValueError):
    pass


class DimensionMismatch(QTagError, ValueError):
    pass


class ShapeMismatch(QTagError, ValueError):
    pass


class LengthMismatch(QTagError, ValueError):
    pass


class IndivisibleCapacity(QTagError, ValueError):
    pass


class InvalidAlpha(QTagError, ValueError):
    pass


class NonFiniteValue(QTagError, ValueError):
    pass


class InsufficientTargets(QTagError, ValueError):
    pass


class ConfigMismatch(QTagError, ValueError):
    pass


class ConfigInvalid(QTagError, ValueError):
    pass


class LatentFormatError(QTagError, ValueError):
    pass
