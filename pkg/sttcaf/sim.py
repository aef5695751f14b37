#!/usr/bin/env python3
"""
Monte Carlo BER/FER simulation of trellis codes over the relay channel.

Frames are quasi-static: h and g are drawn once per frame. Each frame is
terminated in state 0, decoded by a maximum-likelihood Viterbi search with
genie channel knowledge, and counted. The diversity order is read off the
high-SNR slope of the BER curve.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from .model import (
    ChannelSample,
    RelayLinkConfig,
    effective_channel,
    link_for_snr,
    sample_channel,
    transmit_frame,
    white_noise_approx,
)
from .trellis import TrellisCode, encode, termination_inputs, walk
from .utils import format_number, get_worker_count, write_csv

NOISE_MODELS = ("exact_whitened", "paper_white")
BATCH_FRAMES = 64
FIT_POINTS = 4
Z95 = 1.959963984540054

SWEEP_HEADER = ["snr_db", "frames", "bit_errors", "ber", "ci95_ber", "frame_errors", "fer"]


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``link`` fixes M, N and the relay gain; its noise variances are
    recalibrated at every SNR point with ``link_for_snr``.
    """

    code: TrellisCode
    link: RelayLinkConfig
    frame_len: int = 100
    snr_grid_db: Tuple[float, ...] = (8.0, 12.0, 16.0, 20.0, 24.0)
    max_frames: int = 100_000
    target_frame_errors: int = 100
    decoder_noise_model: str = "exact_whitened"
    seed: int = 0
    batch_frames: int = BATCH_FRAMES
    workers: Optional[int] = None
    progress: bool = False

    def __post_init__(self) -> None:
        if self.code.M != self.link.M:
            raise ValueError(
                f"Code '{self.code.name}' has M={self.code.M} but the link has M={self.link.M}"
            )
        if self.frame_len < 10:
            raise ValueError(f"frame_len must be at least 10, but got {self.frame_len}")
        grid = tuple(float(x) for x in self.snr_grid_db)
        if not grid:
            raise ValueError("snr_grid_db must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError(f"snr_grid_db must be strictly increasing, but got {list(grid)}")
        object.__setattr__(self, "snr_grid_db", grid)
        if self.max_frames < 1:
            raise ValueError(f"max_frames must be at least 1, but got {self.max_frames}")
        if self.target_frame_errors < 50:
            raise ValueError(
                f"target_frame_errors must be at least 50, but got {self.target_frame_errors}"
            )
        if self.decoder_noise_model not in NOISE_MODELS:
            raise ValueError(
                f"decoder_noise_model must be one of {NOISE_MODELS}, "
                f"but got '{self.decoder_noise_model}'"
            )
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, but got {self.seed}")
        if self.batch_frames < 1:
            raise ValueError(f"batch_frames must be at least 1, but got {self.batch_frames}")

    @property
    def bits_per_frame(self) -> int:
        return self.frame_len * self.code.bits_per_input


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    frames: int
    bit_errors: int
    frame_errors: int
    ber: float
    fer: float
    ci95_ber: float
    ci95_fer: float


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    fit_range_db: Tuple[float, float]
    residual: float
    intercept: float = 0.0


@dataclass
class SimResult:
    points: List[BerPoint]
    fit: Optional[SlopeFit] = None
    fit_error: Optional[str] = None
    config: Optional[SimConfig] = field(default=None, repr=False)


def branch_metrics(
    code: TrellisCode,
    received: np.ndarray,
    ch: ChannelSample,
    link: RelayLinkConfig,
    noise_model: str = "exact_whitened",
) -> np.ndarray:
    """Log-likelihood of every branch at every time, shape (L, S, q).

    exact_whitened: -(y - H s)^H C^-1 (y - H s) with the exact relay noise
    covariance C. paper_white: -||y - H s||^2 / sigma_white^2. A noiseless
    link falls back to -||y - H s||^2.

    Raises:
        ValueError: On dimension mismatch or unknown noise model
    """
    if noise_model not in NOISE_MODELS:
        raise ValueError(f"noise_model must be one of {NOISE_MODELS}, but got '{noise_model}'")
    received = np.atleast_2d(received)
    if received.shape[0] != link.N:
        raise ValueError(
            f"Received matrix has {received.shape[0]} rows but the destination has N={link.N}"
        )
    if code.M != link.M:
        raise ValueError(f"Code has M={code.M} but the link has M={link.M}")
    eff = effective_channel(ch, link)
    predicted = code.symbols @ eff.H.T  # (S, q, N)
    residual = received.T[:, None, None, :] - predicted[None]  # (L, S, q, N)
    if link.noiseless:
        return -np.sum(np.abs(residual) ** 2, axis=-1)
    if noise_model == "paper_white":
        return -np.sum(np.abs(residual) ** 2, axis=-1) / white_noise_approx(link)
    if link.sigma3_sq > 0:
        # C = L L^H; whitened residual solves L w = r
        chol = np.linalg.cholesky(eff.noise_cov)
        whitened = np.linalg.solve(chol, residual.reshape(-1, link.N).T)
        return -np.sum(np.abs(whitened) ** 2, axis=0).reshape(residual.shape[:-1])
    precision = np.linalg.pinv(eff.noise_cov, hermitian=True)
    quad = np.einsum("...i,ij,...j->...", residual.conj(), precision, residual)
    return -quad.real


def _incoming(code: TrellisCode) -> np.ndarray:
    """For each state, flat branch indices (s * q + u) ending there, padded
    with the index of an always -inf column."""
    flat_next = code.next_array.ravel()
    lists = [np.flatnonzero(flat_next == t) for t in range(code.num_states)]
    width = max(len(x) for x in lists) if lists else 0
    pad = code.num_states * code.num_inputs
    table = np.full((code.num_states, max(width, 1)), pad, dtype=int)
    for t, idx in enumerate(lists):
        table[t, : len(idx)] = idx
    return table


def viterbi_search(
    code: TrellisCode,
    metrics: np.ndarray,
    initial_state: int = 0,
    terminated: bool = True,
) -> np.ndarray:
    """Maximum-metric path through the trellis for a batch of frames.

    Args:
        code: Trellis code
        metrics: Branch metrics, shape (L, S, q) or (B, L, S, q)
        initial_state: Start state of every path
        terminated: Force the path to end in state 0

    Returns:
        Input indices, shape (L,) or (B, L)
    """
    single = metrics.ndim == 3
    if single:
        metrics = metrics[None]
    B, L, S, q = metrics.shape
    if (S, q) != (code.num_states, code.num_inputs):
        raise ValueError(
            f"Metric shape {(S, q)} does not match the trellis {(code.num_states, code.num_inputs)}"
        )
    incoming = _incoming(code)
    score = np.full((B, S), -np.inf)
    score[:, initial_state] = 0.0
    back = np.empty((B, L, S), dtype=int)
    rows = np.arange(B)[:, None]
    for t in range(L):
        cand = (score[:, :, None] + metrics[:, t]).reshape(B, S * q)
        cand = np.concatenate([cand, np.full((B, 1), -np.inf)], axis=1)
        options = cand[:, incoming]  # (B, S, k)
        best = options.argmax(axis=2)
        back[:, t] = incoming[np.arange(S)[None, :], best]
        score = np.take_along_axis(options, best[..., None], axis=2)[..., 0]
    state = np.zeros(B, dtype=int) if terminated else score.argmax(axis=1)
    inputs = np.empty((B, L), dtype=int)
    for t in range(L - 1, -1, -1):
        flat = back[rows[:, 0], t, state]
        inputs[:, t] = flat % q
        state = flat // q
    return inputs[0] if single else inputs


def viterbi_decode(
    code: TrellisCode,
    received: np.ndarray,
    ch: ChannelSample,
    link: RelayLinkConfig,
    noise_model: str = "exact_whitened",
) -> np.ndarray:
    """ML input sequence for one terminated frame received over ``link``.

    Examples:
        The decoder inverts a noiseless transmission::

            link = link_for_snr(2, 2, math.inf)
            y = transmit_frame(encode(code, inputs), ch, link)
            viterbi_decode(code, y, ch, link)  # == inputs
    """
    return viterbi_search(code, branch_metrics(code, received, ch, link, noise_model))


def _snr_key(snr_db: float) -> int:
    if math.isinf(snr_db):
        return 2**32 - 1
    return int(round(snr_db * 1000)) + 10**9


def _bit_errors(a: np.ndarray, b: np.ndarray) -> int:
    diff = np.bitwise_xor(a, b).astype(np.uint8)
    return int(np.unpackbits(diff[..., None], axis=-1).sum())


def simulate_frames(
    cfg: SimConfig, snr_db: float, start: int, count: int
) -> Tuple[int, int, int]:
    """Run frames ``start .. start+count-1`` at one SNR.

    Frame f draws everything from ``default_rng([seed, snr key, f])``, so a
    frame's outcome does not depend on how frames are batched.

    Returns:
        (frames, bit_errors, frame_errors)
    """
    code = cfg.code
    link = link_for_snr(cfg.link.M, cfg.link.N, snr_db, cfg.link.alpha)
    key = _snr_key(snr_db)
    tails: Dict[int, Tuple[int, ...]] = {}
    infos, metrics = [], []
    for f in range(start, start + count):
        rng = np.random.default_rng([cfg.seed, key, f])
        ch = sample_channel(link, rng)
        info = rng.integers(0, code.num_inputs, cfg.frame_len)
        _, state = walk(code, info)
        if state not in tails:
            tails[state] = termination_inputs(code, state)
        inputs = np.concatenate([info, np.array(tails[state], dtype=int)])
        y = transmit_frame(encode(code, inputs), ch, link, rng)
        infos.append(info)
        metrics.append(branch_metrics(code, y, ch, link, cfg.decoder_noise_model))
    # tails can differ in length; group frames by decoded length
    bit_errors = frame_errors = 0
    by_len: Dict[int, List[int]] = {}
    for i, m in enumerate(metrics):
        by_len.setdefault(m.shape[0], []).append(i)
    for idx in by_len.values():
        decoded = viterbi_search(code, np.stack([metrics[i] for i in idx]))
        sent = np.stack([infos[i] for i in idx])
        got = decoded[:, : cfg.frame_len]
        bit_errors += _bit_errors(sent, got)
        frame_errors += int(np.any(sent != got, axis=1).sum())
    return count, bit_errors, frame_errors


def _ci95(errors: int, trials: int) -> float:
    if trials == 0:
        return 0.0
    if errors == 0:
        # one-sided upper bound for zero observed errors
        return 3.0 / trials
    p = errors / trials
    return Z95 * math.sqrt(p * (1 - p) / trials)


def _make_point(cfg: SimConfig, snr_db: float, frames: int, bit_errors: int, frame_errors: int) -> BerPoint:
    bits = frames * cfg.bits_per_frame
    return BerPoint(
        snr_db=snr_db,
        frames=frames,
        bit_errors=bit_errors,
        frame_errors=frame_errors,
        ber=bit_errors / bits if bits else 0.0,
        fer=frame_errors / frames if frames else 0.0,
        ci95_ber=_ci95(bit_errors, bits),
        ci95_fer=_ci95(frame_errors, frames),
    )


def run_point(
    cfg: SimConfig, snr_db: float, parallel: Optional[Parallel] = None
) -> BerPoint:
    """Simulate one SNR point until max_frames or target_frame_errors.

    Batches are evaluated in rounds across the worker pool, then consumed in
    batch order; the first batch that reaches the error target ends the point.
    The result is the same for any worker count.
    """
    n_jobs = get_worker_count(cfg.workers)
    if parallel is None and n_jobs > 1:
        with Parallel(n_jobs=n_jobs) as pool:
            return _run_point(cfg, snr_db, n_jobs, pool)
    return _run_point(cfg, snr_db, n_jobs, parallel)


def _run_point(
    cfg: SimConfig, snr_db: float, n_jobs: int, parallel: Optional[Parallel]
) -> BerPoint:
    batches = [
        (start, min(cfg.batch_frames, cfg.max_frames - start))
        for start in range(0, cfg.max_frames, cfg.batch_frames)
    ]
    frames = bit_errors = frame_errors = 0
    with tqdm(
        total=cfg.max_frames,
        desc=f"{format_number(snr_db)} dB",
        unit="frames",
        disable=not cfg.progress,
    ) as pbar:
        pos = 0
        done = False
        while pos < len(batches) and not done:
            round_ = batches[pos : pos + n_jobs]
            pos += len(round_)
            if parallel is not None and len(round_) > 1:
                results = parallel(
                    delayed(simulate_frames)(cfg, snr_db, start, count)
                    for start, count in round_
                )
            else:
                results = [simulate_frames(cfg, snr_db, s, c) for s, c in round_]
            for n, be, fe in results:
                frames += n
                bit_errors += be
                frame_errors += fe
                pbar.update(n)
                if frame_errors >= cfg.target_frame_errors:
                    done = True
                    break
    return _make_point(cfg, snr_db, frames, bit_errors, frame_errors)


def fit_diversity(points: Sequence[BerPoint]) -> SlopeFit:
    """Least-squares slope d of -log10(ber) against snr_db / 10.

    Uses every point with 0 < ber and finite SNR.

    Raises:
        ValueError: If fewer than 3 such points are given
    """
    usable = [p for p in points if p.ber > 0 and math.isfinite(p.snr_db)]
    if len(usable) < 3:
        raise ValueError(
            f"Diversity fit needs at least 3 points with ber > 0, but got {len(usable)}"
        )
    x = np.array([p.snr_db / 10.0 for p in usable])
    y = np.log10([p.ber for p in usable])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return SlopeFit(
        slope=float(-slope),
        fit_range_db=(float(x.min() * 10), float(x.max() * 10)),
        residual=residual,
        intercept=float(intercept),
    )


def sweep(cfg: SimConfig, fit_points: int = FIT_POINTS) -> SimResult:
    """run_point over the whole grid, then a slope fit on the highest-SNR
    points that saw bit errors.

    Raises:
        ValueError: If the grid has fewer than 4 points or spans less than 12 dB
    """
    grid = cfg.snr_grid_db
    if len(grid) < 4 or grid[-1] - grid[0] < 12:
        raise ValueError(
            f"Sweep grid needs at least 4 points spanning 12 dB, but got {list(grid)}"
        )
    n_jobs = get_worker_count(cfg.workers)
    points: List[BerPoint] = []
    if n_jobs > 1:
        with Parallel(n_jobs=n_jobs) as parallel:
            for snr in grid:
                points.append(run_point(cfg, snr, parallel))
    else:
        for snr in grid:
            points.append(run_point(cfg, snr))
    usable = [p for p in points if p.ber > 0 and math.isfinite(p.snr_db)]
    result = SimResult(points=points, config=cfg)
    try:
        result.fit = fit_diversity(usable[-fit_points:])
    except ValueError as e:
        result.fit_error = str(e)
    return result


def sweep_trailer(result: SimResult) -> str:
    if result.fit is None:
        return f"slope=unavailable reason={result.fit_error}"
    lo, hi = result.fit.fit_range_db
    return (
        f"slope={format_number(result.fit.slope)} "
        f"range={format_number(lo)}-{format_number(hi)}dB "
        f"residual={format_number(result.fit.residual)}"
    )


def write_sweep_csv(result: SimResult, path: str) -> str:
    rows = [
        [p.snr_db, p.frames, p.bit_errors, p.ber, p.ci95_ber, p.frame_errors, p.fer]
        for p in result.points
    ]
    return write_csv(path, SWEEP_HEADER, rows, trailer=[sweep_trailer(result)])
