"""DAG-based non-equivocation dissemination over lossy broadcast, with a
two-dimensional ordering layer for blockchain-style and SMR ordering."""
from .dag import (
    CompletenessReport,
    Keyring,
    LocalDag,
    ProtocolParams,
    Vertex,
    VertexRef,
    completeness,
    extract_originals,
    make_vertex,
    merge,
    reachable,
)
from .kernels import BACKEND

__version__ = "0.1.0"
