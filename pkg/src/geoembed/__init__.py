"""Fast approximate geodesic distance queries on triangle meshes.

A degree-capped saddle vertex graph answers queries near the source. An
embedding of the saddle vertices answers the rest.
"""

from .embedding import Embedding, embed_distance, euclidean_embed, geodesic_embedding
from .errors import (BadMagicError, ChecksumMismatchError, CorruptFileError, FormatError,
                     GeoEmbedError, InvalidVertexError, MeshError, MeshParseError,
                     SolverError, TopologyError, TruncatedFileError,
                     UnsupportedVersionError, VertexClassError)
from .evaluation import (ErrorReport, PairSample, benchmark_queries, mean_relative_error,
                         relative_error, sample_pairs)
from .geodesic import DistanceField, ssad_exact, ssad_reference
from .mesh import Mesh, VertexClassification, classify_vertices, load_mesh
from .optim import SolverOptions
from .persistence import load_precomputation, save_precomputation
from .query import Case, QueryContext, query_distance, query_pairs
from .svg import Svg, SvgParams, build_svg

__version__ = "0.1.0"

__all__ = [
    "BadMagicError", "Case", "ChecksumMismatchError", "CorruptFileError", "DistanceField",
    "Embedding", "ErrorReport", "FormatError", "GeoEmbedError", "InvalidVertexError", "Mesh",
    "MeshError", "MeshParseError", "PairSample", "QueryContext", "SolverError",
    "SolverOptions", "Svg", "SvgParams", "TopologyError", "TruncatedFileError",
    "UnsupportedVersionError", "VertexClassError", "VertexClassification",
    "benchmark_queries", "build_svg", "classify_vertices", "embed_distance",
    "euclidean_embed", "geodesic_embedding", "load_mesh", "load_precomputation",
    "mean_relative_error", "query_distance", "query_pairs", "relative_error",
    "sample_pairs", "save_precomputation", "ssad_exact", "ssad_reference",
]
