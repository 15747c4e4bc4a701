"""Exception hierarchy shared by every stage of the pipeline."""


class VocalError(Exception):
    """Base class for all package errors."""


class InputError(VocalError):
    """Bad or unreadable input (maps to CLI exit code 1)."""


class AnalysisError(VocalError):
    """Analysis is degenerate for the given data (maps to CLI exit code 2)."""


class MalformedWav(InputError):
    pass


class UnsupportedFormat(InputError):
    pass


class MalformedManifest(InputError):
    pass


class DuplicateId(MalformedManifest):
    pass


class OutOfRange(InputError, ValueError):
    pass


class InvalidSpec(InputError, ValueError):
    pass


class ClipTooShort(AnalysisError):
    pass


class NoSpeechDetected(AnalysisError):
    pass


class NoVoicedRegion(AnalysisError):
    pass


class TooFewRows(AnalysisError):
    pass


class DegenerateGenderGroup(AnalysisError):
    pass


class UnknownGender(AnalysisError):
    pass


class DegenerateInput(AnalysisError):
    pass


class TooFewSamples(AnalysisError):
    pass


class ZeroVariance(AnalysisError):
    pass


class LengthMismatch(AnalysisError, ValueError):
    pass


class EmptyTrainingSet(AnalysisError):
    pass


class NonConvergence(AnalysisError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SingularKernel(AnalysisError):
    pass


class UntrainedModel(VocalError):
    pass


class TooFewGroups(AnalysisError):
    pass


class SingleClass(AnalysisError):
    pass


class MissingUtteranceLabels(AnalysisError):
    pass
