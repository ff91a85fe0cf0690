"""Exception hierarchy shared across the package.

Every error carries a stable ``code`` string so that the HTTP layer can emit
structured ``{stage, code, message}`` bodies without string-matching on
exception types.
"""

from __future__ import annotations


class BeamrecallError(Exception):
    """Base class; ``code`` identifies the failure kind on the wire."""

    code = "internal"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)


# --- audio I/O ---------------------------------------------------------------

class MalformedWav(BeamrecallError):
    code = "malformed_wav"


class UnsupportedEncoding(BeamrecallError):
    code = "unsupported_encoding"


class IoFailure(BeamrecallError):
    code = "io_failure"


class BadConfig(BeamrecallError):
    code = "bad_config"


class EmptyInterval(BeamrecallError):
    code = "empty_interval"


# --- array DSP ----------------------------------------------------------------

class EmptyTensor(BeamrecallError):
    code = "empty_tensor"


class SilentInput(BeamrecallError):
    code = "silent_input"


class SingularCovariance(BeamrecallError):
    code = "singular_covariance"


class DimensionMismatch(BeamrecallError):
    code = "dimension_mismatch"


class BinOutOfRange(BeamrecallError):
    code = "bin_out_of_range"


class DuplicateLabel(BeamrecallError):
    code = "duplicate_label"


# --- scene simulation and metrics ---------------------------------------------

class RateMismatch(BeamrecallError):
    code = "rate_mismatch"


class ZeroReference(BeamrecallError):
    code = "zero_reference"


class TooShort(BeamrecallError):
    code = "too_short"


class UnsupportedRate(BeamrecallError):
    code = "unsupported_rate"


# --- transcription -------------------------------------------------------------

class BackendUnreachable(BeamrecallError):
    code = "backend_unreachable"


class MalformedResponse(BeamrecallError):
    code = "malformed_response"


class FixtureMissing(BeamrecallError):
    code = "fixture_missing"


# --- embeddings and index -------------------------------------------------------

class ProviderUnreachable(BeamrecallError):
    code = "provider_unreachable"


class NoTokens(BeamrecallError):
    code = "no_tokens"


class DuplicateId(BeamrecallError):
    code = "duplicate_id"


class EmptyIndex(BeamrecallError):
    code = "empty_index"


class CorruptFile(BeamrecallError):
    code = "corrupt_file"


# --- recall pipeline -------------------------------------------------------------

class NoTopic(BeamrecallError):
    code = "no_topic"


class NoRelevantChunks(BeamrecallError):
    """Relevance filtering removed every retrieved candidate."""

    code = "no_relevant_chunks"


class UnknownChunk(BeamrecallError):
    code = "unknown_chunk"


class MixedStreams(BeamrecallError):
    code = "mixed_streams"


class PipelineError(BeamrecallError):
    """Wraps a component failure with the pipeline stage it occurred in."""

    code = "pipeline"

    def __init__(self, stage: str, cause: BeamrecallError):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.code = cause.code


# --- service ----------------------------------------------------------------------

class ChannelMismatch(BeamrecallError):
    code = "channel_mismatch"


class UnknownSession(BeamrecallError):
    code = "unknown_session"


class BindFailure(BeamrecallError):
    code = "bind_failure"
