from .config import ModelConfig
from .encoder import ForwardTrace, encode, encode_backward
from .params import Parameters, init_params, load_checkpoint, save_checkpoint

__all__ = [
    "ForwardTrace",
    "ModelConfig",
    "Parameters",
    "encode",
    "encode_backward",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
]
