"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the command line front end can map
failures onto its documented codes without a lookup table.
"""


class FinQNLPError(Exception):
    exit_code = 1


# -- simulator --------------------------------------------------------------

class SimulationError(FinQNLPError):
    exit_code = 5


class UnresolvedParam(SimulationError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unresolved circuit parameter {self.name!r}"


class InvalidTarget(SimulationError, ValueError):
    pass


class DegeneratePostselection(SimulationError):
    def __init__(self, success_prob):
        super().__init__(f"postselection success probability {success_prob:.3e} below threshold")
        self.success_prob = success_prob


# -- grammar ----------------------------------------------------------------

class GrammarError(FinQNLPError):
    exit_code = 4


class TypeSyntaxError(GrammarError, SyntaxError):
    def __init__(self, message, text, column):
        super().__init__(f"{message} at column {column}: {text!r}")
        self.text = text
        self.column = column


class UnknownWord(GrammarError, KeyError):
    def __init__(self, word):
        super().__init__(word)
        self.word = word

    def __str__(self):
        return f"no pregroup type for word {self.word!r}"


class NotASentence(GrammarError):
    def __init__(self, words, residue):
        self.words = list(words)
        self.residue = residue
        super().__init__(
            f"{' '.join(self.words)!r} does not reduce to s; best residue: {residue}"
        )


class MissingAnsatz(GrammarError, KeyError):
    def __init__(self, atom):
        super().__init__(atom)
        self.atom = atom

    def __str__(self):
        return f"no qubit count configured for atom {self.atom!r}"


# -- models / training ------------------------------------------------------

class DimensionMismatch(FinQNLPError, ValueError):
    exit_code = 4


class EmptySequence(FinQNLPError, ValueError):
    exit_code = 4


class InvalidLabel(FinQNLPError, ValueError):
    exit_code = 4


class NonFiniteGradient(FinQNLPError, FloatingPointError):
    exit_code = 5


class TooSmall(FinQNLPError, ValueError):
    exit_code = 4


class EmptySplit(FinQNLPError, ValueError):
    exit_code = 4


# -- data -------------------------------------------------------------------

class DataError(FinQNLPError):
    exit_code = 4


class AllRecordsInvalid(DataError, ValueError):
    pass


class EmptyDataset(DataError, ValueError):
    pass


class InvalidConfig(DataError, ValueError):
    pass


class NoParsableLines(DataError, ValueError):
    pass


class LLMError(FinQNLPError):
    exit_code = 3


class AuthError(LLMError):
    pass


class NetworkError(LLMError):
    pass


class MissingDependency(FinQNLPError):
    exit_code = 3
