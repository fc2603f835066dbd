"""Minimal dense-tensor kernel with hand-derived backward passes.

Tensors are (channels, height, width) float64 numpy arrays. There is no
general autodiff: each primitive ships its own reverse pass, and every
gradient is verified against central finite differences in the test suite.
"""

from .primitives import (
    ConvParams,
    NormParams,
    batchnorm_backward,
    batchnorm_forward,
    bilinear_upsample,
    bilinear_upsample_backward,
    conv2d,
    conv2d_backward,
    relu,
    sigmoid,
)
from .samf import SamfCache, SamfStage, samf_backward, samf_forward, stack_samf, stack_samf_backward
from .coisd import (
    SharedEncoderDecoder,
    co_isd_loss,
    run_invariant_suite,
    shared_grad_accumulate,
    soft_dice_loss,
)

__all__ = [
    "ConvParams",
    "NormParams",
    "conv2d",
    "conv2d_backward",
    "bilinear_upsample",
    "bilinear_upsample_backward",
    "sigmoid",
    "relu",
    "batchnorm_forward",
    "batchnorm_backward",
    "SamfStage",
    "SamfCache",
    "samf_forward",
    "samf_backward",
    "stack_samf",
    "stack_samf_backward",
    "soft_dice_loss",
    "co_isd_loss",
    "shared_grad_accumulate",
    "SharedEncoderDecoder",
    "run_invariant_suite",
]
