"""Exception hierarchy shared by every lungscan module."""


class LungscanError(Exception):
    """Base class for all errors raised by lungscan."""


class NoSlices(LungscanError):
    """A scan directory holds no readable slice images."""


class BadSlice(LungscanError):
    def __init__(self, path, reason=""):
        self.path = path
        msg = f"cannot use slice {path}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class UnconfiguredImage(LungscanError, KeyError):
    """The fake segmenter was asked about an image it was not configured with."""

    def __str__(self):
        return Exception.__str__(self)


class UnconfiguredPrompt(LungscanError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DegenerateEmbedding(LungscanError):
    """An embedding vector has zero norm (or is not finite)."""


class EmptyMask(LungscanError):
    pass


class NoCandidates(LungscanError):
    """No part mask is left to choose a region of interest from."""

    def __init__(self, slice_index=None, msg=None):
        self.slice_index = slice_index
        if msg is None:
            msg = "no candidate masks survive area filtering"
            if slice_index is not None:
                msg += f" (slice {slice_index})"
        super().__init__(msg)


class BackendError(LungscanError):
    """A segmenter/embedder call failed while processing a given slice."""

    def __init__(self, slice_index, cause):
        self.slice_index = slice_index
        self.cause = cause
        super().__init__(f"backend failure on slice {slice_index}: {cause}")


class BadLength(LungscanError, ValueError):
    pass


class TooManySlices(LungscanError, ValueError):
    pass


class NumericalError(LungscanError, FloatingPointError):
    pass


class ConfigError(LungscanError, ValueError):
    pass
