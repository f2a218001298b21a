"""Bond percolation on balls of Z^d and the Heisenberg group: chemical distances,
coarse-graining, F2 path surgery and Monte Carlo estimators."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CertificationError,
    ConfigError,
    GeometryError,
    InvariantViolation,
    PercChemError,
    PreconditionError,
    ResourceError,
)
from .graph import FiniteRegion, Graph, VertexSet, build_box, build_heisenberg, build_lattice, build_region  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .percolation import PercSample, chemical_distance, clusters, ring_point, sample_config  # noqa: E402

__all__ = [
    "BACKEND",
    "CertificationError",
    "ConfigError",
    "FiniteRegion",
    "GeometryError",
    "Graph",
    "InvariantViolation",
    "PercChemError",
    "PercSample",
    "PreconditionError",
    "ResourceError",
    "VertexSet",
    "build_box",
    "build_heisenberg",
    "build_lattice",
    "build_region",
    "chemical_distance",
    "clusters",
    "ring_point",
    "sample_config",
]
