"""Exception hierarchy.

Two roots map onto CLI exit codes: ``InputError`` (bad files, bad config,
malformed records -> exit 2) and ``AnalysisError`` (the data cannot support
the requested analysis -> exit 1).
"""


class TGDetectError(Exception):
    pass


class InputError(TGDetectError):
    pass


class AnalysisError(TGDetectError):
    pass


# ingest
class EmptyInput(InputError):
    pass


class MissingField(InputError):
    pass


class NonNumericValue(InputError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ConfigError(InputError):
    pass


class EmptyDataset(AnalysisError):
    pass


class TargetTooLarge(AnalysisError):
    pass


# fetch
class FetchError(TGDetectError):
    pass


class NetworkError(FetchError):
    pass


class RateLimited(FetchError):
    def __init__(self, message, retry_after=None):
        super().__init__(message)
        self.retry_after = retry_after


class MalformedResponse(FetchError):
    pass


# graph / features
class UnknownAccount(AnalysisError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NoTransactions(AnalysisError):
    pass


class TooFewTransactions(AnalysisError):
    pass


# selection / ml
class SingleClassInput(AnalysisError):
    pass


class DegenerateMatrix(AnalysisError):
    pass


class TooFewRows(AnalysisError):
    pass


class SingleCluster(AnalysisError):
    pass


class ZeroVector(AnalysisError):
    pass


class NoMaliciousLabels(AnalysisError):
    pass


class BadHyperparameter(AnalysisError):
    pass


class SchemaMismatch(AnalysisError):
    pass


class LengthMismatch(AnalysisError):
    pass


# behavior / statfit
class EmptyVector(AnalysisError):
    pass


class InsufficientTail(AnalysisError):
    pass
