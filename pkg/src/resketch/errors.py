"""Exception types shared across the toolkit.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit codes: 2 config, 3 data, 4 model.
"""


class ResketchError(Exception):
    exit_code = 1


class ConfigError(ResketchError):
    exit_code = 2


class LockError(ConfigError):
    """Output directory already owned by another run."""


# -- data / corpus errors -------------------------------------------------

class DataError(ResketchError):
    exit_code = 3


class LexError(DataError):
    def __init__(self, message, line=None, col=None):
        super().__init__(message)
        self.line = line
        self.col = col


class ParseError(DataError):
    def __init__(self, message, token_index=None):
        super().__init__(message)
        self.token_index = token_index


class SchemaError(DataError):
    def __init__(self, message, line_number=None, field=None):
        super().__init__(message)
        self.line_number = line_number
        self.field = field


class EmptyCorpus(DataError):
    pass


class UnknownDoc(DataError):
    pass


class UnknownSampleId(DataError):
    pass


class LengthMismatch(DataError):
    pass


# -- interpreter errors ---------------------------------------------------

class EvalError(ResketchError):
    """Base for runtime faults inside interpreted programs."""
    exit_code = 3


class ArityError(EvalError):
    pass


class EvalTypeError(EvalError):
    """Operator applied to operands of the wrong value kind."""


class UndefinedVariable(EvalError):
    pass


class FuelExhausted(EvalError):
    pass


class MissingReturn(EvalError):
    pass


# -- model errors ---------------------------------------------------------

class ModelError(ResketchError):
    exit_code = 4


class VocabMismatch(ModelError):
    pass


class EmptyTrainingSet(ModelError):
    pass


class LengthOverflow(ModelError):
    pass


class NonFiniteGradient(ModelError):
    pass


class CorruptCheckpoint(ModelError):
    pass


class VersionMismatch(ModelError):
    pass


class ArchitectureMismatch(ModelError):
    pass


class MissingModel(ModelError):
    pass


# -- evaluation errors ----------------------------------------------------

class EmptyInput(DataError):
    pass


class RunnerUnavailable(ResketchError):
    exit_code = 2


class StageError(ResketchError):
    """Wraps a failure inside one pipeline stage with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
