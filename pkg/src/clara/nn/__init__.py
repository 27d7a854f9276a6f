"""Hand-rolled float64 neural blocks: layer ops, LSTM, Adam, checking, tensor I/O."""

from .adam import Adam, clip_global_norm
from .gradcheck import gradient_check
from .tensorio import load_tensors, save_tensors

__all__ = ["Adam", "clip_global_norm", "gradient_check", "load_tensors", "save_tensors"]
