"""Exception types raised across the package."""


class GaitError(Exception):
    """Base class for all package errors."""


class EmptySilhouette(GaitError, ValueError):
    pass


class AspectOverflow(GaitError, ValueError):
    pass


class NoCycleFound(GaitError, ValueError):
    pass


class DimensionMismatch(GaitError, ValueError):
    pass


class InsufficientTuningData(GaitError, ValueError):
    pass


class DegenerateData(GaitError, ValueError):
    pass


class SingularScatter(GaitError, ValueError):
    pass


class UnfittedModel(GaitError, RuntimeError):
    pass


class EmptyGallery(GaitError, ValueError):
    pass


class DegenerateTrajectory(GaitError, ValueError):
    pass


class MalformedName(GaitError, ValueError):
    def __init__(self, path, reason="does not match SSS/cc-NN/AAA/SSS-cc-NN-AAA-FFF.png"):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class EmptyCorpus(GaitError, ValueError):
    pass


class TooFewSubjects(GaitError, ValueError):
    pass


class LengthMismatch(GaitError, ValueError):
    pass


class EmptyInput(GaitError, ValueError):
    pass


class IoFailure(GaitError, OSError):
    pass
