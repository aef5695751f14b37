#!/usr/bin/env python3
"""
STTC-AF: space-time trellis codes for amplify-and-forward relay channels

A Python package for analyzing, designing and simulating space-time trellis
codes sent from an M-antenna source through a single-antenna relay to an
N-antenna destination.
"""

__version__ = "0.1.0"

from .analysis import (
    DesignScore,
    MgfValue,
    PepEstimate,
    QuadratureError,
    Spectrum,
    metric_determinant,
    metric_log_eig,
    mgf_asymptotic,
    mgf_b,
    mgf_exact,
    mgf_monte_carlo,
    pep,
    pep_monte_carlo,
    score_code,
    spectrum,
    union_bound,
)
from .model import (
    ChannelSample,
    EffectiveChannel,
    RelayLinkConfig,
    effective_channel,
    link_for_snr,
    sample_channel,
    transmit_frame,
    white_noise_approx,
)
from .search import (
    CodeComparison,
    RankedCode,
    SearchSpace,
    compare_codes,
    search_codes,
)
from .sim import (
    BerPoint,
    SimConfig,
    SimResult,
    SlopeFit,
    fit_diversity,
    run_point,
    sweep,
    viterbi_decode,
)
from .trellis import (
    DifferenceMatrix,
    EnumerationLimitError,
    TrellisCode,
    builtin_codes,
    code_from_labels,
    encode,
    enumerate_error_events,
    get_code,
    load_catalog,
    qpsk_map,
)

__all__ = [
    "BerPoint",
    "ChannelSample",
    "CodeComparison",
    "DesignScore",
    "DifferenceMatrix",
    "EffectiveChannel",
    "EnumerationLimitError",
    "MgfValue",
    "PepEstimate",
    "QuadratureError",
    "RankedCode",
    "RelayLinkConfig",
    "SearchSpace",
    "SimConfig",
    "SimResult",
    "SlopeFit",
    "Spectrum",
    "TrellisCode",
    "builtin_codes",
    "code_from_labels",
    "compare_codes",
    "effective_channel",
    "encode",
    "enumerate_error_events",
    "fit_diversity",
    "get_code",
    "link_for_snr",
    "load_catalog",
    "metric_determinant",
    "metric_log_eig",
    "mgf_asymptotic",
    "mgf_b",
    "mgf_exact",
    "mgf_monte_carlo",
    "pep",
    "pep_monte_carlo",
    "qpsk_map",
    "run_point",
    "sample_channel",
    "score_code",
    "search_codes",
    "spectrum",
    "sweep",
    "transmit_frame",
    "union_bound",
    "viterbi_decode",
    "white_noise_approx",
]
