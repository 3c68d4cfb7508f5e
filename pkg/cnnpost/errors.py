"""Custom exceptions for cnnpost.

Every error carries the process exit code the CLI reports for it:
0 success, 1 usage error, 2 data error, 3 numeric failure.
"""


class CnnpostError(Exception):
    """Base exception for all cnnpost errors."""

    exit_code: int = 2


class UsageError(CnnpostError):
    """Base exception for invalid invocations and configuration."""

    exit_code = 1


class ConfigError(UsageError):
    """Raised when a settings or training configuration is invalid."""
    pass


class FineTuneRequiredError(UsageError):
    """Raised when a fine-tuning preset has no model to start from."""

    def __init__(self, qp: int, source_qp: int, looked_at: str):
        self.qp = qp
        self.source_qp = source_qp
        super().__init__(
            f"QP {qp} is fine-tuned from the QP {source_qp} network, but no QP {source_qp} "
            f"model was found at {looked_at}. Train QP {source_qp} first or pass --init-from."
        )


class DataError(CnnpostError):
    """Base exception for malformed or inconsistent input data."""

    exit_code = 2


class ShapeMismatchError(DataError):
    """Raised when two operands must share a shape and do not."""

    def __init__(self, what: str, left: tuple[int, ...], right: tuple[int, ...]):
        self.left = left
        self.right = right
        super().__init__(f"{what}: shape {left} does not match shape {right}")


class SpecError(DataError):
    """Raised when a network description or its parameters are inconsistent."""
    pass


class StaleActivationsError(DataError):
    """Raised when backward is called with activations from another forward pass."""
    pass


class EmptyDatasetError(DataError):
    """Raised when training or corpus building has nothing to work on."""
    pass


class FormatError(DataError):
    """Base exception for image, frame and report file formats."""
    pass


class MalformedHeaderError(FormatError):
    """Raised when a PGM header cannot be parsed."""
    pass


class TruncatedDataError(FormatError):
    """Raised when a file holds fewer samples than its header or geometry declares."""
    pass


class UnsupportedMaxvalError(FormatError):
    """Raised for PGM files that are not 8-bit."""

    def __init__(self, maxval: int):
        self.maxval = maxval
        super().__init__(f"Unsupported PGM maxval {maxval}; only 8-bit (maxval 255) is supported")


class ModelFileError(DataError):
    """Base exception for serialized model files."""
    pass


class BadMagicError(ModelFileError):
    """Raised when a file does not start with the model magic bytes."""
    pass


class VersionMismatchError(ModelFileError):
    """Raised when a model file was written by an unsupported format version."""

    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(f"Model file format version {found} is not supported (expected {supported})")


class ChecksumError(ModelFileError):
    """Raised when the trailing checksum does not match the file content."""
    pass


class TruncatedModelError(ModelFileError):
    """Raised when a model file ends before its declared payload."""
    pass


class CurveError(DataError):
    """Base exception for rate-distortion curves."""
    pass


class NonMonotonicCurveError(CurveError):
    """Raised when bitrate or PSNR does not increase strictly along a curve."""
    pass


class NoOverlapError(CurveError):
    """Raised when two curves share no interval to integrate over."""
    pass


class NumericError(CnnpostError):
    """Raised on non-finite values or numerically unusable systems."""

    exit_code = 3
