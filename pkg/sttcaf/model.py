#!/usr/bin/env python3
"""
Two-hop amplify-and-forward relay channel.

The source has M antennas, the relay one antenna and the destination N
antennas. This module provides:
- Link configuration (noise variances, relay gain, SNR calibration)
- Rayleigh fading draws for the source-relay and relay-destination links
- The effective single-hop channel H = alpha * g * h and its noise covariance
- Frame transmission with exact (correlated) relay noise
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


def _complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0):
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class RelayLinkConfig:
    """Antenna counts and noise statistics of the relay link.

    Args:
        M: Source antennas
        N: Destination antennas
        sigma1_sq: Noise variance at the relay
        sigma3_sq: Noise variance per destination antenna
        alpha: Relay amplification gain
        es_n0_db: Nominal signal-to-noise ratio in dB (informational; see
            ``link_for_snr`` for the calibrated variances)

    Raises:
        ValueError: If an antenna count is below 1 or a variance or the gain
            is negative
    """

    M: int
    N: int
    sigma1_sq: float = 1.0
    sigma3_sq: float = 1.0
    alpha: float = 1.0
    es_n0_db: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.M, (int, np.integer)) or self.M < 1:
            raise ValueError(f"M must be a positive integer, but got {self.M}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ValueError(f"N must be a positive integer, but got {self.N}")
        if self.sigma1_sq < 0 or self.sigma3_sq < 0:
            raise ValueError(
                "Noise variances must be non-negative, but got "
                f"sigma1_sq={self.sigma1_sq}, sigma3_sq={self.sigma3_sq}"
            )
        if self.alpha < 0:
            raise ValueError(f"Relay gain alpha must be non-negative, but got {self.alpha}")

    @property
    def noiseless(self) -> bool:
        return self.sigma1_sq == 0 and self.sigma3_sq == 0


@dataclass(frozen=True, eq=False)
class ChannelSample:
    """One fading realization: h is the 1xM source-relay row, g the Nx1
    relay-destination column (both stored as 1-D arrays)."""

    h: np.ndarray
    g: np.ndarray


@dataclass(frozen=True, eq=False)
class EffectiveChannel:
    H: np.ndarray
    noise_cov: np.ndarray


def link_for_snr(
    M: int, N: int, snr_db: float, alpha: float = 1.0
) -> RelayLinkConfig:
    """Build a link whose destination E_s/N0 equals ``snr_db``.

    Each antenna sends a unit-energy symbol, so the received signal energy per
    destination antenna is M. N0 is the average effective noise power per
    receive antenna, alpha^2 * sigma1^2 + sigma3^2, with the relay and
    destination noise variances set equal.

    Args:
        M: Source antennas
        N: Destination antennas
        snr_db: Target E_s/N0 in dB; ``math.inf`` gives a noiseless link
        alpha: Relay gain

    Returns:
        Calibrated RelayLinkConfig
    """
    if math.isinf(snr_db) and snr_db > 0:
        return RelayLinkConfig(M, N, 0.0, 0.0, alpha, snr_db)
    n0 = M / 10 ** (snr_db / 10)
    sigma_sq = n0 / (1 + alpha**2)
    return RelayLinkConfig(M, N, sigma_sq, sigma_sq, alpha, snr_db)


def pep_es_n0(snr_db: float, M: int) -> float:
    """E_s/N0 for the pairwise error analysis at a simulation SNR.

    The analysis uses difference matrices of unit-energy symbols, so its
    E_s/N0 is 1/N0 where N0 follows ``link_for_snr``.
    """
    return 10 ** (snr_db / 10) / M


def sample_channel(cfg: RelayLinkConfig, rng: np.random.Generator) -> ChannelSample:
    """Draw i.i.d. Rayleigh fading for both hops.

    Args:
        cfg: Link configuration
        rng: Seeded numpy Generator

    Returns:
        ChannelSample with unit-variance complex entries
    """
    h = _complex_gaussian(rng, cfg.M)
    g = _complex_gaussian(rng, cfg.N)
    return ChannelSample(h=h, g=g)


def effective_channel(ch: ChannelSample, cfg: RelayLinkConfig) -> EffectiveChannel:
    """Collapse the two hops into y = H s + n.

    Conditioned on g, the noise alpha*g*n1 + n2 is Gaussian with covariance
    alpha^2 sigma1^2 g g^H + sigma3^2 I_N.

    Raises:
        ValueError: If the sample dimensions do not match the configuration
    """
    if ch.h.shape != (cfg.M,) or ch.g.shape != (cfg.N,):
        raise ValueError(
            f"Channel sample shapes h{ch.h.shape}, g{ch.g.shape} do not match "
            f"M={cfg.M}, N={cfg.N}"
        )
    H = cfg.alpha * np.outer(ch.g, ch.h)
    noise_cov = cfg.alpha**2 * cfg.sigma1_sq * np.outer(
        ch.g, ch.g.conj()
    ) + cfg.sigma3_sq * np.eye(cfg.N)
    return EffectiveChannel(H=H, noise_cov=noise_cov)


def white_noise_approx(cfg: RelayLinkConfig, sigma_g_sq: float = 1.0) -> float:
    """Scalar noise variance of the white approximation of the relay noise.

    sigma_g_sq is the per-antenna variance of g (1 under unit-variance
    fading), which makes alpha^2 sigma1^2 + sigma3^2 the average diagonal of the
    exact covariance.
    """
    return cfg.alpha**2 * cfg.sigma1_sq * sigma_g_sq + cfg.sigma3_sq


def transmit_frame(
    codeword: np.ndarray,
    ch: ChannelSample,
    cfg: RelayLinkConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Send an MxL codeword through the relay.

    Per channel use t: y_t = alpha * g * (h s_t + n1_t) + n2_t, with fresh
    noise every t. The common relay noise n1 correlates the N receive
    antennas.

    Args:
        codeword: MxL complex matrix, one column per channel use
        ch: Fading realization (held fixed over the frame)
        cfg: Link configuration
        rng: Noise generator; may be omitted for a noiseless link

    Returns:
        NxL received matrix
    """
    codeword = np.atleast_2d(codeword)
    if codeword.shape[0] != cfg.M:
        raise ValueError(
            f"Codeword has {codeword.shape[0]} rows but the source has M={cfg.M}"
        )
    L = codeword.shape[1]
    relay_rx = ch.h @ codeword
    if cfg.sigma1_sq > 0:
        relay_rx = relay_rx + _complex_gaussian(rng, L, cfg.sigma1_sq)
    y = cfg.alpha * np.outer(ch.g, relay_rx)
    if cfg.sigma3_sq > 0:
        y = y + _complex_gaussian(rng, (cfg.N, L), cfg.sigma3_sq)
    return y
