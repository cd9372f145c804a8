"""Quantization with exactly specified reconstruction-error distributions."""

from .aggregate import (
    AggregateConfig,
    ScaleShift,
    aggregate_config,
    aggregate_decode,
    aggregate_encode,
    decompose,
    decompose_unif,
    irwin_hall_decode,
    irwin_hall_encode,
    modular_sum,
)
from .distributions import (
    LayerDensity,
    UnimodalPdf,
    gaussian,
    irwin_hall,
    laplace,
    layered_pdf,
    min_step,
    shifted_pdf,
)
from .quantizers import (
    DitherParams,
    LayeredState,
    QuantizerMessage,
    dither_decode,
    dither_encode,
    direct_sample_state,
    fixed_length_bits,
    layered_decode,
    layered_encode,
    shifted_sample_state,
    vector_decode,
    vector_encode,
)
from .randomness import SharedRandomness, derive_client_stream, uniform01

__version__ = "0.1.0"
