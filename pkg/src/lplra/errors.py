"""Exception hierarchy.

Refusals (budget guards, unsupported norms, failed guesses) are distinct from
malformed input so the CLI can map them to different exit codes.
"""


class LplraError(Exception):
    """Base class for library errors."""


class ShapeError(LplraError, ValueError):
    """Operands whose shapes do not conform."""


class ParseError(LplraError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class RefusalError(LplraError):
    """The algorithm declined to run on this input."""


class BudgetExceededError(RefusalError):
    def __init__(self, count, budget):
        self.count = count
        self.budget = budget
        super().__init__(
            f"exhaustive search needs C(m, k) = {count} subsets, budget is {budget}"
        )


class SelectionFailedError(RefusalError):
    def __init__(self, round_index, n_guess, attempts):
        self.round_index = round_index
        self.n_guess = n_guess
        self.attempts = attempts
        super().__init__(
            f"round {round_index}: no 2k-sample covered 1/10 of the remaining "
            f"columns in {attempts} attempts (N = {n_guess:.6g} is probably too small)"
        )


class UnsupportedNormError(RefusalError, ValueError):
    pass


class MemoryGuardError(RefusalError):
    pass


class IsoperimetryError(LplraError):
    pass


class GridExhaustedError(RefusalError):
    def __init__(self, low, high, count):
        self.low = low
        self.high = high
        self.count = count
        super().__init__(
            f"column selection failed for all {count} guesses of N in [{low:.6g}, {high:.6g}]"
        )
