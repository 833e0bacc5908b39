# pylint: disable=missing-docstring


class CertifierError(Exception):
    """Base class for every error raised by deqcert."""
    pass


class ArgumentError(CertifierError, ValueError):
    pass


class DimensionError(ArgumentError):
    pass


class SingularError(CertifierError):
    pass


class NumericalError(CertifierError):
    """NaN or Inf produced while iterating a fixed-point solver."""

    def __init__(self, message, iteration=None, lane=None):
        super(NumericalError, self).__init__(message)
        self.iteration = iteration
        self.lane = lane


class TrainingDiverged(CertifierError):

    def __init__(self, message, step=None):
        super(TrainingDiverged, self).__init__(message)
        self.step = step


class CertificationFailed(CertifierError):

    def __init__(self, message, point_index=None):
        super(CertificationFailed, self).__init__(message)
        self.point_index = point_index


class AlignmentError(CertifierError):
    """Two reports do not describe the same points and noise."""
    pass


class IoError(CertifierError, IOError):
    pass


class SchemaError(IoError):
    """A file does not follow its declared schema or version."""
    pass
