"""Joint low-rank compression of recurrent (RNN / peephole LSTM) models."""

from .compress import CompressionReport, RankPolicy, compress_model, select_rank
from .inference import compare, forward
from .linalg import SvdResult, svd
from .model import Architecture, Model, generate_random, load, param_count, save

__all__ = [
    "Architecture",
    "CompressionReport",
    "Model",
    "RankPolicy",
    "SvdResult",
    "compare",
    "compress_model",
    "forward",
    "generate_random",
    "load",
    "param_count",
    "save",
    "select_rank",
    "svd",
]
