"""Exception types shared across the package.

Every error raised by protflow derives from ProtflowError so callers can catch
one base class. The CLI maps subfamilies to exit codes: config errors -> 1,
data errors -> 2, divergence -> 3, checkpoint errors -> 4.
"""


class ProtflowError(Exception):
    """Base class for all protflow errors."""


# --- sequence / data errors -------------------------------------------------

class DataError(ProtflowError):
    """A referenced data file is missing, unreadable, or malformed."""


class UnknownResidue(DataError):
    def __init__(self, char, position):
        self.char = char
        self.position = position
        super().__init__(f"unknown residue {char!r} at position {position}")


class InvalidTokenId(DataError):
    def __init__(self, token):
        self.token = token
        super().__init__(f"token id {token} outside vocabulary")


class SequenceTooLong(DataError):
    def __init__(self, length, l_max):
        self.length = length
        self.l_max = l_max
        super().__init__(f"sequence length {length} exceeds L_max={l_max}")


class MalformedFasta(DataError):
    pass


class EmptyCorpus(DataError):
    pass


# --- config errors ----------------------------------------------------------

class ConfigError(ProtflowError):
    """Bad config file, unknown key, bad value, or missing required key."""


# --- numeric errors ---------------------------------------------------------

class TooFewSamples(ProtflowError):
    pass


class NotSymmetric(ProtflowError):
    pass


class NotPSD(ProtflowError):
    pass


class NonFiniteValue(ProtflowError):
    pass


# --- latent / training errors -----------------------------------------------

class IncompatibleRatio(ProtflowError):
    """Latent width not divisible by the compression ratio."""


class Diverged(ProtflowError):
    """Training loss became non-finite."""


class NonFiniteLoss(ProtflowError):
    """A single objective evaluation came out non-finite."""


class ShapeMismatch(ProtflowError):
    pass


# --- ODE solver errors ------------------------------------------------------

class SolverFailure(ProtflowError):
    """Base class for solver failures (propagated by callers such as reflow)."""


class NonFiniteState(SolverFailure):
    pass


class NfeBudgetExceeded(SolverFailure):
    pass


class StepUnderflow(SolverFailure):
    pass


# --- multichain errors ------------------------------------------------------

class WidthMismatch(ProtflowError):
    pass


class LayoutMismatch(ProtflowError):
    pass


# --- metric errors ----------------------------------------------------------

class TooFewSequences(ProtflowError):
    pass


class EmptyInput(ProtflowError):
    pass


class EmptySequence(ProtflowError):
    pass


class UnequalSizes(ProtflowError):
    pass


class BadBandwidth(ProtflowError):
    pass


class BatchTooLarge(ProtflowError):
    pass


class DimensionMismatch(ProtflowError):
    pass


# --- checkpoint errors ------------------------------------------------------

class CheckpointError(ProtflowError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionUnsupported(CheckpointError):
    def __init__(self, found, supported):
        self.found = found
        self.supported = supported
        super().__init__(f"checkpoint version {found} unsupported (supported: {supported})")


class CorruptOffset(CheckpointError):
    pass


class IncompatibleCheckpoint(CheckpointError):
    """Checkpoint lacks a component the command needs."""


# --- warnings ---------------------------------------------------------------

class DegeneratePropertyWarning(UserWarning):
    """A property had identical values everywhere after pooling; it was skipped."""


class BothSetsEmptyWarning(UserWarning):
    """Both k-mer sets were empty; similarity defined as 0."""
