"""Exception hierarchy shared by all geoembed modules."""


class GeoEmbedError(Exception):
    """Base class for every error raised by this package."""


class MeshError(GeoEmbedError):
    pass


class MeshParseError(MeshError):
    """The mesh file could not be parsed."""


class TopologyError(MeshError):
    """The mesh is parseable but violates a topological requirement."""


class InvalidVertexError(GeoEmbedError, IndexError):
    pass


class VertexClassError(GeoEmbedError, ValueError):
    """A query routine received a vertex of the wrong class (saddle / non-saddle)."""


class SolverError(GeoEmbedError):
    pass


class FormatError(GeoEmbedError):
    """Base class for precomputation file problems."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class ChecksumMismatchError(FormatError):
    """The precomputation was built for a different mesh."""


class TruncatedFileError(FormatError):
    pass


class CorruptFileError(FormatError):
    pass
