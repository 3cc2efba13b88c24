"""Broadcast network coding lab: hypergraphic LNC, RLNC, IDNC and the perfect-LNC bound."""

from .gf256 import KnowledgeMatrix, decoded_indices, eliminate, gf_inv, gf_mul, is_innovative
from .hypergraph import (Hypergraph, InstanceTooLarge, NotSupported, VertexCover,
                         minimal_vertex_cover, perfect_solution_exists, strong_coloring_bruteforce)
from .model import (BlockMetrics, ChannelModel, DecoderBank, IncompleteBlockError, Sfm, apdd, bct,
                    deliver, generate_sfm)
from .schemes import SCHEME_NAMES, ContractViolation, make_scheme, run_block

__all__ = [
    "KnowledgeMatrix", "decoded_indices", "eliminate", "gf_inv", "gf_mul", "is_innovative",
    "Hypergraph", "InstanceTooLarge", "NotSupported", "VertexCover", "minimal_vertex_cover",
    "perfect_solution_exists", "strong_coloring_bruteforce",
    "BlockMetrics", "ChannelModel", "DecoderBank", "IncompleteBlockError", "Sfm", "apdd", "bct",
    "deliver", "generate_sfm",
    "SCHEME_NAMES", "ContractViolation", "make_scheme", "run_block",
]
