class ShapeError(ValueError):
    """Array dimensions do not fit the layer or operation."""


class StateError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class PhaseOrderError(StateError):
    """A training phase was requested before its prerequisites completed."""


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite or exceeded the divergence limit."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed, truncated, or fails its checksum."""
