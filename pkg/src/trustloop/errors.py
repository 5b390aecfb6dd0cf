"""Exception types raised across the package."""


class TrustLoopError(Exception):
    """Base class for every error this package raises on purpose."""


# --- dataset ingestion / partitioning ---

class BadMagic(TrustLoopError):
    """IDX file does not start with the expected magic number."""


class TruncatedFile(TrustLoopError):
    """IDX file is shorter than its header promises."""


class CountMismatch(TrustLoopError):
    """Image and label files disagree on the number of items."""


class InsufficientData(TrustLoopError):
    """A split asks for more examples than the dataset holds."""


class PoolExhausted(TrustLoopError):
    """An iteration batch would run past the end of the inference pool."""


# --- model / embedding ---

class ShapeMismatch(TrustLoopError):
    """Input dimensions do not match the fitted parameters."""


class EmptyDataset(TrustLoopError):
    """Operation needs at least one example."""


# --- trust scoring ---

class ClassTooSmall(TrustLoopError):
    """A class has too few points to build its density set."""


class DomainError(TrustLoopError):
    """A scalar argument is outside its documented domain."""


class NoClasses(TrustLoopError):
    """A trust spectrum has no present classes to average."""


# --- agents / bus ---

class UnknownReceiver(TrustLoopError):
    """Envelope addressed to an agent that is not registered on the bus."""


class MissingMetadata(TrustLoopError):
    """Supervisor stepped before model/training refs were registered."""


class HumanTimeout(TrustLoopError):
    """Interactive labeling did not complete within the deadline."""


# --- labeling service ---

class UnknownTask(TrustLoopError):
    """Label submitted for a task id that was never enqueued."""


class LabelOutOfRange(TrustLoopError):
    """Submitted label is not a valid class index."""


class Conflict(TrustLoopError):
    """Task already answered with a different label."""


# --- harness ---

class LengthMismatch(TrustLoopError):
    """Comparison inputs have different numbers of timesteps."""
