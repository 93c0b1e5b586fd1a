"""Domain layer: graph, partitioning, GCN math, caching and quantization."""

from .errors import CdfgnnError
from .services.graph_store import Dataset, Graph

__all__ = ["CdfgnnError", "Dataset", "Graph"]
