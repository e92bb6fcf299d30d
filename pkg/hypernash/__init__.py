MAX_DIMENSION = 26
DEFAULT_SEED = 0
SEED_ENV_VAR = 'HYPERNASH_SEED'
FORMAT_VERSION = 1


class HypernashError(Exception):
    """Base class for every error raised by hypernash."""


class DimensionError(HypernashError, ValueError):
    pass


class ValidationError(HypernashError, ValueError):
    pass


class DomainError(HypernashError, ValueError):
    """The requested quantity is undefined for these parameters."""


class CouplingError(HypernashError):
    pass


class ParseError(HypernashError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f'line {line}, column {column}: {message}')
        self.line = line
        self.column = column
