"""Exception types raised across the toolkit.

Every error carries a short ``tag`` (the class name) so the harness can
record failures per object without keeping exception objects around.
"""


class ReconEvalError(Exception):
    """Base class for all toolkit errors."""

    @property
    def tag(self) -> str:
        return type(self).__name__


# mesh_io
class MeshFormatError(ReconEvalError, ValueError):
    """Raised when mesh bytes cannot be decoded into a valid mesh."""


class UnknownFormat(MeshFormatError):
    pass


class ObjParseError(MeshFormatError):
    pass


class BadMagic(MeshFormatError):
    pass


class UnsupportedVersion(MeshFormatError):
    pass


class TruncatedChunk(MeshFormatError):
    pass


class MissingPositions(MeshFormatError):
    pass


class NonTriangleMode(MeshFormatError):
    pass


class GlbParseError(MeshFormatError):
    """Structurally invalid glTF JSON or accessor layout."""


class MalformedHeader(MeshFormatError):
    pass


class UnsupportedEncoding(MeshFormatError):
    pass


class PlyParseError(MeshFormatError):
    """PLY body does not match its header."""


class IndexOutOfRange(MeshFormatError):
    pass


class InvalidMesh(ReconEvalError, ValueError):
    """Mesh arrays violate a TriangleMesh invariant."""


# geometry / metrics
class DegenerateExtent(ReconEvalError, ValueError):
    pass


class NoSurface(ReconEvalError, ValueError):
    pass


class EmptyCloud(ReconEvalError, ValueError):
    pass


class UndefinedIoU(ReconEvalError, ValueError):
    pass


class DimensionMismatch(ReconEvalError, ValueError):
    pass


class TooSmall(ReconEvalError, ValueError):
    pass


class ExtractorFailure(ReconEvalError, RuntimeError):
    pass


# renderer
class RenderConfigError(ReconEvalError, ValueError):
    pass


# harness
class EmptyDataset(ReconEvalError, ValueError):
    pass


class DuplicateId(ReconEvalError, ValueError):
    pass


class ConfigError(ReconEvalError, ValueError):
    pass
