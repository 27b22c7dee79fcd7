# Error types raised by nslif modules.
# Every error raised on purpose derives from NslifError so nslif.py can
# tell a runtime failure (exit 1) from a usage error (exit 2).


class NslifError(Exception):
    """Base class of all nslif errors"""


class InvalidParameterError(NslifError, ValueError):
    """A neuron, stimulus or training parameter is out of its valid range"""


class StimulusError(NslifError):
    """Malformed input drive: non finite samples, bad spike times, empty traces"""


class InfeasibleTargetError(NslifError):
    """
    No ensemble of non negative Poisson rates produces the requested
    current mean and standard deviation
    """

    def __init__(self, m_i, s_i, reason):
        self.m_i = m_i
        self.s_i = s_i
        self.reason = reason
        super().__init__(f'Infeasible target m_I={m_i} s_I={s_i}: {reason}')


class QuadratureError(NslifError):
    """The adaptive quadrature of the diffusion rate did not converge"""


class CalibrationError(NslifError):
    """The activation fit can't be done with the given tuning samples"""


class ShapeMismatchError(NslifError, ValueError):
    """Layer shapes don't chain or weights don't fit the architecture"""


class TrainingDivergedError(NslifError):
    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f'Training diverged at epoch {epoch} batch {batch}: loss={loss}'
        )


class UnsupportedLayerError(NslifError):
    """A layer kind that can't be unrolled into spiking connections"""


class SimulationError(NslifError):
    """The neuron state became non finite during a simulation"""


class IdxFormatError(NslifError):
    """Base class for dataset file errors"""


class MagicMismatchError(IdxFormatError):
    def __init__(self, path, expected, found):
        self.path = path
        self.expected = expected
        self.found = found
        super().__init__(
            f'{path}: bad magic number {found}, expected {expected}'
        )


class TruncatedFileError(IdxFormatError):
    def __init__(self, path, expected, found):
        self.path = path
        self.expected = expected
        self.found = found
        super().__init__(
            f'{path}: truncated payload, expected {expected} bytes, got {found}'
        )


class CountMismatchError(IdxFormatError):
    def __init__(self, images, labels):
        self.images = images
        self.labels = labels
        super().__init__(
            f'Image count {images} does not match label count {labels}'
        )


class ManifestError(NslifError):
    """Weight manifest missing, corrupt or not matching its blob"""
