"""Exception hierarchy shared by all meshring modules."""


class MeshRingError(Exception):
    """Base class for errors raised by meshring."""


class MeshError(MeshRingError, ValueError):
    """A mesh violates a structural invariant."""


class ObjFormatError(MeshError):
    """Malformed Wavefront OBJ input."""


class FaceIndexOutOfRange(ObjFormatError, IndexError):
    """A face references a vertex that does not exist."""


class ShapeMismatchError(MeshRingError, ValueError):
    """Array shapes disagree (features vs. adjacency, checkpoint vs. input, ...)."""


class ConfigError(MeshRingError, ValueError):
    """Invalid network, schedule or generator configuration."""


class NumericalError(MeshRingError, FloatingPointError):
    """A non-finite loss or gradient was produced."""
