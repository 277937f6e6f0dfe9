"""exceptions.py
Error types raised by domainrank. Everything derives from ValueError so code
written against plain ValueError keeps working.
"""

__all__ = ['DomainRankError', 'DomainError', 'DimensionError', 'IngestionError', 'DegenerateDataError',
           'ConfigError', 'DependencyError']


class DomainRankError(ValueError):
    """Base class for all domainrank errors."""


class DomainError(DomainRankError):
    """An operation was called outside its domain (empty reference set, delta outside [0, 1], ...)."""


class DimensionError(DomainError):
    """Fingerprints of different lengths were combined."""


class IngestionError(DomainError):
    """A row of an input file could not be parsed.

    @:arg path      str: File being read.
    @:arg row       int: 1-based line number in the file (the header is line 1).
    @:arg message   str: What was wrong with the row.
    """
    def __init__(self, path, row, message: str):
        self.path = str(path)
        self.row = row
        super().__init__(f'{self.path}, line {row}: {message}')


class DegenerateDataError(DomainError):
    """The data cannot support the requested estimate (zero variance, no usable targets, ...)."""


class ConfigError(DomainRankError):
    """Invalid or incomplete configuration.

    :param pointer: JSON pointer of the offending key, '' when the problem is not tied to one key.
    """
    def __init__(self, message: str, pointer: str = ''):
        self.pointer = pointer
        super().__init__(f'{pointer}: {message}' if pointer else message)


class DependencyError(DomainRankError):
    """A pipeline stage was run before a stage it depends on."""
    def __init__(self, stage: str, missing: str):
        self.stage = stage
        self.missing = missing
        super().__init__(f'Stage {stage!r} requires stage {missing!r} to be run first.')
