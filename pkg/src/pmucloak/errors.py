"""Exception hierarchy for pmucloak.

Every library error derives from :class:`PmuCloakError`. The intermediate
classes group errors into families; the CLI maps each family to a distinct
exit code (see ``pmucloak.cli``).
"""


class PmuCloakError(Exception):
    """Base class for all pmucloak errors."""


# -- configuration / input files ---------------------------------------------

class ConfigError(PmuCloakError):
    """Invalid parameter value, inconsistent configuration, or missing file."""


class FormatError(PmuCloakError):
    """A persisted artifact (frame log, mapping file, model file) is malformed."""


class InvalidParams(ConfigError):
    """Generation or experiment parameters outside their documented ranges."""


# -- frame codec --------------------------------------------------------------

class CodecError(PmuCloakError):
    """Base class for synchrophasor frame encode/decode errors."""


class FieldOverflow(CodecError):
    """A field value does not fit the width of its wire representation."""


class PhasorCountMismatch(CodecError):
    """A data frame must carry exactly the configured number of phasors."""


class TooShort(CodecError):
    """Byte buffer ends before the frame structure is complete."""


class BadSync(CodecError):
    """Leading bytes are not a recognized sync word."""


class ChecksumMismatch(CodecError):
    """Trailing CRC does not match the frame contents."""


class SizeMismatch(CodecError):
    """Declared frame size disagrees with the actual byte count."""


class UnknownCommandCode(CodecError):
    """Command frame carries a code outside the known enumeration."""


# -- format-transforming encoding ---------------------------------------------

class FteError(PmuCloakError):
    """Base class for regex-language ranking and slice codec errors."""


class InvalidPattern(FteError):
    """Pattern is not in the supported regex dialect."""


class EmptyLanguage(FteError):
    """Pattern accepts no string at the configured length."""


class NotInLanguage(FteError):
    """String is not accepted by the compiled automaton."""


class WrongLength(FteError):
    """String length differs from the language's fixed output length."""


class IndexOutOfRange(FteError):
    """Rank index is outside [0, word_count)."""


class EmptyCapacity(FteError):
    """Language has too few words per slice to carry the length header."""


class KeyMissing(FteError):
    """Whitening key required but not configured."""


class BadSliceLength(FteError):
    """Slice string length differs from the configured fixed_slice."""


class LengthHeaderCorrupt(FteError):
    """Slice length header decodes to an impossible payload byte count."""


# -- field mapping --------------------------------------------------------------

class MappingError(PmuCloakError):
    """Base class for field-dictionary mapping errors."""


class EmptyCorpus(MappingError):
    """No frames available to build a mapping from."""


class InvalidFrame(MappingError):
    """A corpus record cannot be decoded as a data frame."""


class SymbolCountMismatch(MappingError):
    """Symbol string length differs from the mapping's symbols-per-frame."""


class NonHexSymbol(MappingError):
    """Symbol outside [0-9a-f]."""


class ValueOutOfDictionary(MappingError):
    """Field value falls outside every observed group range."""


# -- timing model ---------------------------------------------------------------

class TimingError(PmuCloakError):
    """Base class for delay-model errors."""


class TooFewPackets(TimingError):
    """Need at least two timestamps to form one delay."""


class NonMonotonicTimestamps(TimingError):
    """Timestamps must be non-decreasing."""


class InsufficientData(TimingError):
    """Symbol sequence too short to support model inference."""


class NonDeterministicMergeConflict(TimingError):
    """A state ends up with two transitions on the same symbol."""


class AbsorbingDeadEnd(TimingError):
    """A model state has no outgoing transitions."""


class DegenerateTraceWarning(UserWarning):
    """Trace has fewer distinct delay modes than requested bins."""


# -- detector ---------------------------------------------------------------------

class DetectorError(PmuCloakError):
    """Base class for detection/evaluation errors."""


class EmptyObservation(DetectorError):
    """No symbols to trace."""


class NoFlowsForLabel(DetectorError):
    """Evaluation needs at least one flow of each label."""


# -- session tunnel ----------------------------------------------------------------

class TunnelError(PmuCloakError):
    """Base class for tunnel session errors."""


class HandshakeTimeout(TunnelError):
    """Peer did not complete the command handshake in time."""


class PeerProtocolViolation(TunnelError):
    """Peer sent a frame that is illegal in the current session phase."""


class TransportFailure(TunnelError):
    """Socket-level failure outside a clean session end."""


class SliceReassemblyGap(TunnelError):
    """A slice group lost frames and cannot be reassembled."""
