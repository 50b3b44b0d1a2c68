"""Exception hierarchy. Each family carries the exit status used by the CLI."""


class MoralPsddError(Exception):
    exit_code = 1


class ParseError(MoralPsddError):
    """Malformed constraint, scenario, circuit or query text."""

    exit_code = 2

    def __init__(self, message, position=None, source=None):
        self.position = position
        self.source = source
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UndeclaredVariableError(ParseError):
    pass


class FitError(MoralPsddError):
    exit_code = 3


class UnsatisfiableTheoryError(FitError):
    pass


class DataError(FitError):
    """A dataset row or header is inconsistent with the scenario."""

    def __init__(self, message, rows=None):
        self.rows = list(rows) if rows is not None else []
        super().__init__(message)


class QueryError(MoralPsddError):
    exit_code = 4


class ZeroProbabilityError(QueryError):
    pass


class ZeroSupportError(QueryError):
    pass


class NBoundError(QueryError):
    exit_code = 5

    def __init__(self, n, floor):
        self.n = n
        self.floor = floor
        super().__init__(
            f"cost importance N={n!r} is not admissible; N must exceed {floor!r}"
        )


class UtilityError(MoralPsddError):
    exit_code = 6


class SupportTooLargeError(MoralPsddError):
    exit_code = 7
