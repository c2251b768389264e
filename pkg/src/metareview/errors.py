"""Exception types raised across the package."""


class MetaReviewError(Exception):
    """Base class for all package errors."""


# conversation model
class MalformedRecord(MetaReviewError, ValueError):
    pass


class DanglingParent(MetaReviewError, ValueError):
    pass


class CycleDetected(MetaReviewError, ValueError):
    pass


class MetadataOnNonReview(MetaReviewError, ValueError):
    pass


class UnknownDocument(MetaReviewError, KeyError):
    pass


class NoDecisionNote(MetaReviewError, ValueError):
    pass


class AmbiguousDecision(MetaReviewError, ValueError):
    pass


# assembly
class EmptyCorpus(MetaReviewError, ValueError):
    pass


class BudgetTooSmall(MetaReviewError, ValueError):
    pass


# model
class ShapeMismatch(MetaReviewError, ValueError):
    pass


class EmptyAttentionRow(MetaReviewError, ValueError):
    pass


class NoRecordedGraph(MetaReviewError, RuntimeError):
    pass


# heads / losses
class OutOfRange(MetaReviewError, ValueError):
    pass


class PositionOutOfBounds(MetaReviewError, IndexError):
    pass


class LengthMismatch(MetaReviewError, ValueError):
    pass


class NonFiniteLoss(MetaReviewError, FloatingPointError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EmptyDecoderOutput(MetaReviewError, ValueError):
    pass


# training
class DidNotConverge(MetaReviewError, RuntimeError):
    pass


class CorruptCheckpoint(MetaReviewError, IOError):
    pass


class ConfigMismatch(MetaReviewError, ValueError):
    pass


# corpus / evaluation
class EmptySummaryAfterPreprocessing(MetaReviewError, ValueError):
    pass


class EmptyText(MetaReviewError, ValueError):
    pass


class SingleClassCorpus(MetaReviewError, ValueError):
    pass
