"""Desk-scale wireless-sensing compression toolkit.

Simulates L-shaped-array channel frequency responses, fuses T masked
amplitude/phase spectrum frames into one MetaSpectrum pair (RIS codebook
masking + differential encoding + shifting addition), recovers the frames
with a self-supervised ADMM decoder, and extracts 2D angle-of-arrival and
time-of-flight via 3D MUSIC.
"""

from .codebook import CodebookId, RisCodebook, gen_codebook, validate_codebook
from .codec import (
    EncodedFrame,
    MetaSpectrumPair,
    SensingOperator,
    compression_ratio,
    differential_decode,
    differential_encode,
    shift_add,
)
from .container import Container, read_container, write_container
from .decoder import AdmmState, DecodeConfig, DecodeTrace, GeneratorState, admm_decode
from .hashing import (
    HashFingerprint,
    SegmentBuffer,
    fingerprint,
    hamming,
    resize_mean,
    select_frame,
)
from .metrics import MetricsReport, psnr
from .music import MusicSpectrum, SteeringGrid, find_peaks, music_spectrum, smooth_covariance, steering_vector
from .nets import ConvGenerator
from .pipeline import PipelineConfig, PipelineResult, run_pipeline, simulate_frames
from .scene import (
    ArrayGeometry,
    CfrFrame,
    MultipathScene,
    Path,
    SpectrumPair,
    SubcarrierGrid,
    apply_ris,
    gen_cfr,
    load_scene,
    parse_scene,
    split_spectrums,
)

__version__ = "0.1.0"
