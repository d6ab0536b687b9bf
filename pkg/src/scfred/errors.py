"""Exception hierarchy. Every failure mode raised by the library lives here."""


class ScfredError(Exception):
    """Base class for all library errors."""


class ValidationError(ScfredError):
    pass


class LevelOutOfRange(ScfredError):
    pass


class ModelMismatch(ScfredError):
    pass


class RankAmbiguous(ScfredError):
    """A rank decision fell inside the ambiguity band.

    Carries the singular value spectrum so the caller can inspect the gap.
    """

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = list(spectrum) if spectrum is not None else []


class DimTooLarge(ScfredError):
    pass


class NotAComplement(ScfredError):
    pass


class NotInQuadrant(ScfredError):
    pass


class DomainError(ScfredError):
    pass


class PreconditionFailed(ScfredError):
    pass


class InternalContradiction(ScfredError):
    """A certified certificate contradicted a downstream exact computation."""


class ContractionBreach(ScfredError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class OutOfRadius(ScfredError):
    pass


class NoConvergence(ScfredError):
    pass


class FillerDegenerate(ScfredError):
    pass


class CriterionFailed(ScfredError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class LedgerIncomplete(ScfredError):
    def __init__(self, level):
        super().__init__(f"contraction ledger has no certified entry for level {level}")
        self.level = level


class NotTransversal(ScfredError):
    pass


class BudgetExceeded(ScfredError):
    pass


class HypothesisFailed(ScfredError):
    pass


class IndexMismatch(ScfredError):
    pass


class NotExact(ScfredError):
    pass


class DegenerateBasis(ScfredError):
    pass


class NotSurjective(ScfredError):
    pass


class PathTooWild(ScfredError):
    pass
