from .autodiff import Var, backward, const, param
from .layers import ACTIVATION_FNS, apply_activation, combine, combined_channels, pad_channels
from .network import (
    CompiledNode,
    Network,
    TrainConfig,
    TrainResult,
    build_network,
    forward,
    forward_with_intermediates,
    gradients,
    infer_shapes,
    mae_loss,
    sgd_train,
)

__all__ = [
    "Var",
    "backward",
    "const",
    "param",
    "ACTIVATION_FNS",
    "apply_activation",
    "combine",
    "combined_channels",
    "pad_channels",
    "CompiledNode",
    "Network",
    "TrainConfig",
    "TrainResult",
    "build_network",
    "forward",
    "forward_with_intermediates",
    "gradients",
    "infer_shapes",
    "mae_loss",
    "sgd_train",
]
