"""Exception hierarchy for the fishbone toolkit."""


class FishboneError(Exception):
    """Base class for all toolkit errors."""


class MeshFormatError(FishboneError):
    """Input file failed to parse. Carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class EmptyGeometryError(FishboneError):
    """Mesh is empty after cleaning."""


class OperatorConstructionError(FishboneError):
    """Laplace/mass operators could not be built (all-degenerate geometry)."""


class SolverError(FishboneError):
    """Sparse solve failed or did not reach the requested residual."""

    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class ExtractionFailureError(FishboneError):
    """No rib survived filtering at any level of a part."""


class EmptySpineError(FishboneError):
    """Spine assembly received an empty rib tree."""


class SelectionError(FishboneError):
    """A command referenced a rib / branch / part that does not exist."""


class ParameterError(FishboneError):
    """A deformation or simulation parameter is out of its valid range."""


class MassError(FishboneError):
    """Lumped mass computation failed (zero total surface area)."""


class SimulationDivergenceError(FishboneError):
    """Non-finite state detected during time integration."""

    def __init__(self, message, step_index=None):
        self.step_index = step_index
        if step_index is not None:
            message = f"{message} (substep {step_index})"
        super().__init__(message)


class TrackError(FishboneError):
    """Keyframe track topology mismatch or empty track."""


class RigFileError(FishboneError):
    """Rig/cache/track container is unreadable, truncated, wrong version, or fails validation."""


class SamplerSpecError(FishboneError):
    """Augmentation sampler specification is invalid."""


class SessionError(FishboneError):
    """Unknown session or invalid session state."""
