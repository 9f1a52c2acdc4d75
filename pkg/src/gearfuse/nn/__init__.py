"""Small NCHW float64 network engine with hand-written backward passes."""

from . import functional
from .checkpoint import CheckpointError, checkpoint_bytes, load_checkpoint, load_into, save_checkpoint
from .functional import ConvSpec, conv_output_size, deconv_output_size, softmax, softmax_xent
from .gradcheck import GradCheckReport, grad_check
from .layers import (BatchNorm2d, CenterCrop, Conv2d, ConvTranspose2d, GlobalAvgPool, MaxPool2d, Module,
                     Parameter, ReLU, ResidualBlock, Sequential)
from .optim import Adam, adam_step

__all__ = [
    "functional", "ConvSpec", "conv_output_size", "deconv_output_size", "softmax", "softmax_xent",
    "GradCheckReport", "grad_check", "BatchNorm2d", "CenterCrop", "Conv2d", "ConvTranspose2d",
    "GlobalAvgPool", "MaxPool2d", "Module", "Parameter", "ReLU", "ResidualBlock", "Sequential",
    "Adam", "adam_step", "CheckpointError", "checkpoint_bytes", "load_checkpoint", "load_into",
    "save_checkpoint",
]
