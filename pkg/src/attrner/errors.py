"""Exception types raised across the package."""


class AttrNerError(Exception):
    """Base class for all package errors."""


class InvalidSchemeError(AttrNerError):
    pass


class ConversionError(AttrNerError):
    pass


class OverlapError(AttrNerError):
    pass


class EvaluationError(AttrNerError):
    pass


class ParseError(AttrNerError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DerivationError(AttrNerError):
    pass


class TruncationError(AttrNerError):
    pass


class ConfigError(AttrNerError):
    pass


class EncodingError(AttrNerError):
    pass


class GradientError(AttrNerError):
    pass


class InfeasibleGoldError(AttrNerError):
    pass


class OracleRefusal(AttrNerError):
    pass


class TemplateError(AttrNerError):
    pass


class NonFiniteGradientError(AttrNerError):
    def __init__(self, tensor_name, detail=""):
        self.tensor_name = tensor_name
        super().__init__(f"non-finite gradient in tensor {tensor_name!r}{detail}")


class PipelineError(AttrNerError):
    pass


class CheckpointError(AttrNerError):
    pass
