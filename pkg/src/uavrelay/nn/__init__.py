"""Small numpy neural-network kernel: layers, losses, optimizer."""

from .layers import ConcatAux, Conv2D, Dense, Flatten, LeakyReLU, Tanh, layer_from_dict
from .losses import huber_loss, mse_loss
from .network import Network, build_spec, min_input_size
from .optim import Adam, soft_update

__all__ = [
    "Adam",
    "ConcatAux",
    "Conv2D",
    "Dense",
    "Flatten",
    "LeakyReLU",
    "Network",
    "Tanh",
    "build_spec",
    "huber_loss",
    "layer_from_dict",
    "min_input_size",
    "mse_loss",
    "soft_update",
]
