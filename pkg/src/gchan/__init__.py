"""Schatten-norm calculus for gauge-covariant Gaussian bosonic channels."""

from .channel import (
    ChannelParams,
    CpReport,
    amplifier,
    attenuator,
    classical_noise,
    cp_check,
    entropy_gain_bound,
    schatten_norm_analytic,
    tensor,
    transform_sigma,
)
from .thermal import (
    cross_norm_ratio,
    entropy_gain,
    norm_ratio,
    output_schatten_norm,
    output_spectrum,
    thermal_entropy,
    thermal_schatten_norm,
)

__version__ = "0.1.0"
