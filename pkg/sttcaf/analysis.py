#!/usr/bin/env python3
"""
Pairwise error analysis of space-time trellis codes over the relay channel.

The quantity of interest is X = ||H Omega||^2 = a * b with a = ||g||^2
(Gamma(N, 1)) and b = h Omega Omega^H h^H. Everything here is expressed
through the eigenvalues of Omega Omega^H:
- exact MGF of X by quadrature, with a sampling cross-check
- large-|s| asymptotic forms of the MGF
- Craig-formula PEP, its Chernoff bound and a channel-averaged sampling check
- the union bound over error events
- code-design metrics and per-code scores
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special, stats

from .trellis import (
    WIDE_MAX_LEN,
    DifferenceMatrix,
    TrellisCode,
    enumerate_error_events,
)

RANK_TOLERANCE = 1e-10
DISTINCT_GAP = 1e-6
QUADRATURE_TOLERANCE = 1e-6
GAMMA_TAIL = 1e-12
CRAIG_NODES = 64
S_REF = -1e8
WORST_EVENTS = 10
SCORE_MAX_LEN = 6

_LAGUERRE_ORDERS = (64, 128)
_LOG_ORDERS = (256, 512)
_LOG_MARGIN = 40.0


def score_max_len(M: int) -> int:
    """Default longest error event for scoring codes with M transmit antennas."""
    return SCORE_MAX_LEN if M <= 2 else WIDE_MAX_LEN


class QuadratureError(RuntimeError):
    """The MGF integral did not converge with any available rule."""


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues of Omega Omega^H, descending, with numerical rank."""

    lambdas: np.ndarray
    rank: int
    M: int

    @classmethod
    def from_lambdas(cls, values: Sequence[float]) -> "Spectrum":
        lam = np.sort(np.clip(np.asarray(values, dtype=float).ravel(), 0.0, None))[::-1]
        return cls._from_sorted(lam)

    @classmethod
    def _from_sorted(cls, lam: np.ndarray) -> "Spectrum":
        lam = np.array(lam, dtype=float)
        top = lam[0] if lam.size else 0.0
        small = lam <= RANK_TOLERANCE * top
        lam[small] = 0.0
        return cls(lambdas=lam, rank=int(np.count_nonzero(~small)), M=lam.size)

    @property
    def positive(self) -> np.ndarray:
        return self.lambdas[self.lambdas > 0]

    def is_distinct(self) -> bool:
        lam = self.lambdas
        for i in range(lam.size):
            for j in range(i + 1, lam.size):
                if abs(lam[i] - lam[j]) <= DISTINCT_GAP * max(lam[i], lam[j]):
                    return False
        return True

    def scaled(self, factor: float) -> "Spectrum":
        return Spectrum(self.lambdas * factor, self.rank, self.M)


@dataclass(frozen=True)
class MgfValue:
    value: float
    method: str
    s: float
    std_error: Optional[float] = None


@dataclass(frozen=True)
class PepEstimate:
    craig: float
    chernoff: float
    es_n0: float


@dataclass(frozen=True)
class PepSample:
    """Channel-averaged PEP sample mean and its standard error."""

    value: float
    std_error: float
    samples: int


@dataclass(frozen=True)
class EventScore:
    """Per-event row of a design score report."""

    index: int
    event_length: int
    lambdas: Tuple[float, ...]
    rank: int
    metric: float
    fallback: bool


@dataclass(frozen=True)
class DesignScore:
    """Design-rule score of a code at a given receive antenna count.

    Codes are ordered by ``score_key``: higher effective diversity first,
    then the worst-case metric (determinant: larger is better, log_eig:
    smaller is better), then ``tiebreak`` (same direction, summed over the
    worst events).
    """

    min_rank: int
    worst_metric: float
    criterion: str
    diversity: int
    tiebreak: float
    num_events: int
    M: int
    N: int
    worst_events: Tuple[EventScore, ...] = ()

    def score_key(self) -> Tuple[float, float, float]:
        if self.criterion == "determinant":
            return (-self.diversity, -self.worst_metric, -self.tiebreak)
        return (-self.diversity, self.worst_metric, self.tiebreak)


def _gram(omega: Union[DifferenceMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(omega, DifferenceMatrix):
        omega = omega.omega
    omega = np.atleast_2d(np.asarray(omega, dtype=complex))
    return omega @ omega.conj().T


def spectrum(omega: Union[DifferenceMatrix, np.ndarray]) -> Spectrum:
    """Eigen-spectrum of Omega Omega^H.

    Eigenvalues at or below 1e-10 * lambda_max are set to 0 and not counted
    in the rank; a zero matrix gives an all-zero spectrum of rank 0.
    """
    lam = np.linalg.eigvalsh(_gram(omega))[::-1]
    return Spectrum._from_sorted(np.clip(lam, 0.0, None))


def spectra(events: Sequence[DifferenceMatrix]) -> List[Spectrum]:
    """Batched ``spectrum`` over a list of events."""
    if not events:
        return []
    grams = np.stack([_gram(e) for e in events])
    lam = np.clip(np.linalg.eigvalsh(grams)[:, ::-1], 0.0, None)
    return [Spectrum._from_sorted(row) for row in lam]


def mgf_b(spec: Spectrum, s: float) -> float:
    """MGF of b = sum_i lambda_i |h_i|^2: prod_i 1/(1 - lambda_i s)."""
    if s > 0:
        raise ValueError(f"s must be non-positive, but got {s}")
    return float(np.prod(1.0 / (1.0 - spec.lambdas * s)))


def _check_n(N: int) -> None:
    if N < 1:
        raise ValueError(f"N must be at least 1, but got {N}")


@lru_cache(maxsize=None)
def _laguerre_rule(order: int, N: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = special.roots_genlaguerre(order, N - 1)
    return x, w / special.gamma(N)


@lru_cache(maxsize=None)
def _legendre_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


@lru_cache(maxsize=None)
def _log_upper(N: int) -> float:
    return math.log(stats.gamma.isf(GAMMA_TAIL, N))


def _log_range(lam: np.ndarray, N: int, abs_s: np.ndarray) -> Tuple[np.ndarray, float]:
    pivot = np.log(np.maximum(abs_s * lam.max(), 1e-300))
    t_lo = np.minimum(-pivot, 0.0) - _LOG_MARGIN / N
    return t_lo, _log_upper(N)


def _log_integrand(t: np.ndarray, lam: np.ndarray, N: int, abs_s: np.ndarray) -> np.ndarray:
    et = np.exp(t)
    log_den = np.log1p((abs_s[..., None] * et)[..., None] * lam).sum(axis=-1)
    return np.exp(N * t - et - log_den - special.gammaln(N))


def _laguerre_values(lam: np.ndarray, N: int, abs_s: np.ndarray, order: int) -> np.ndarray:
    x, w = _laguerre_rule(order, N)
    log_den = np.log1p(np.multiply.outer(np.multiply.outer(abs_s, x), lam)).sum(axis=-1)
    return np.exp(-log_den) @ w


def _log_legendre_values(lam: np.ndarray, N: int, abs_s: np.ndarray, order: int) -> np.ndarray:
    nodes, weights = _legendre_rule(order)
    t_lo, t_hi = _log_range(lam, N, abs_s)
    half = (t_hi - t_lo) / 2.0
    t = (t_lo + t_hi)[:, None] / 2.0 + half[:, None] * nodes
    return half * (_log_integrand(t, lam, N, abs_s) @ weights)


def _adaptive_value(lam: np.ndarray, N: int, abs_s: float) -> float:
    t_lo, t_hi = _log_range(lam, N, np.array([abs_s]))
    t_lo = float(t_lo[0])
    breaks = sorted(
        p for p in (-np.log(abs_s * lam)).tolist() + [0.0] if t_lo < p < t_hi
    )

    log_norm = special.gammaln(N)

    def f(t: float) -> float:
        et = math.exp(t)
        return math.exp(N * t - et - float(np.log1p(abs_s * et * lam).sum()) - log_norm)

    value, err = integrate.quad(
        f, t_lo, t_hi, points=breaks or None, limit=400, epsabs=0.0, epsrel=1e-10
    )
    if not np.isfinite(value) or value <= 0 or err > QUADRATURE_TOLERANCE * value:
        raise QuadratureError(
            f"MGF quadrature did not converge at s={-abs_s:g} "
            f"(lambdas={lam.tolist()}, N={N}, value={value:g}, error={err:g})"
        )
    return value


def mgf_values(spec: Spectrum, N: int, s: Union[float, Sequence[float], np.ndarray]) -> np.ndarray:
    """Exact MGF of ||H Omega||^2 at one or more s <= 0.

    Tries generalized Gauss-Laguerre (orders 64 and 128), then Gauss-Legendre
    after the substitution x = e^t (orders 256 and 512), then adaptive
    quadrature; a rule is accepted when its two orders agree to 1e-6.

    Raises:
        ValueError: If N < 1 or some s > 0
        QuadratureError: If no rule converges
    """
    _check_n(N)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr > 0):
        raise ValueError(f"s must be non-positive, but got {s_arr.max()}")
    out = np.ones(s_arr.shape)
    lam = spec.positive
    todo = np.flatnonzero(s_arr < 0) if lam.size else np.array([], dtype=int)
    if todo.size == 0:
        return out

    abs_s = -s_arr[todo]
    low, high = (_laguerre_values(lam, N, abs_s, n) for n in _LAGUERRE_ORDERS)
    ok = np.abs(high - low) <= QUADRATURE_TOLERANCE * np.abs(high)
    out[todo[ok]] = high[ok]
    todo, abs_s = todo[~ok], abs_s[~ok]
    if todo.size == 0:
        return out

    low, high = (_log_legendre_values(lam, N, abs_s, n) for n in _LOG_ORDERS)
    ok = np.abs(high - low) <= QUADRATURE_TOLERANCE * np.abs(high)
    out[todo[ok]] = high[ok]
    for k, a in zip(todo[~ok], abs_s[~ok]):
        out[k] = _adaptive_value(lam, N, float(a))
    return out


def mgf_exact(spec: Spectrum, N: int, s: float) -> MgfValue:
    """Exact MGF (1/Gamma(N)) int x^(N-1) e^-x / prod_i(1 - lambda_i s x) dx.

    Args:
        spec: Eigen-spectrum of Omega Omega^H
        N: Destination antennas
        s: Argument, s <= 0

    Returns:
        MgfValue with method "exact_quadrature"

    Raises:
        ValueError: On invalid N or s
        QuadratureError: If the quadrature does not converge

    Examples:
        >>> round(mgf_exact(Spectrum.from_lambdas([1.0]), 1, -1.0).value, 4)
        0.5963
    """
    value = float(mgf_values(spec, N, s)[0])
    return MgfValue(value=value, method="exact_quadrature", s=float(s))


def _complex_normal_sq(rng: np.random.Generator, shape) -> np.ndarray:
    # |h|^2 of a unit-variance circular complex Gaussian is Exp(1)
    return rng.standard_exponential(shape)


def mgf_monte_carlo(
    spec: Spectrum,
    N: int,
    s: float,
    samples: int,
    rng: np.random.Generator,
    chunk: int = 1 << 18,
) -> MgfValue:
    """Sample mean of exp(s a b) with a ~ Gamma(N, 1), b = sum_i lambda_i |h_i|^2.

    Raises:
        ValueError: If samples < 10^4, N < 1 or s > 0
    """
    _check_n(N)
    if samples < 10_000:
        raise ValueError(f"samples must be at least 10000, but got {samples}")
    if s > 0:
        raise ValueError(f"s must be non-positive, but got {s}")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        a = rng.gamma(N, 1.0, n)
        b = _complex_normal_sq(rng, (n, spec.M)) @ spec.lambdas
        x = np.exp(s * a * b)
        total += x.sum()
        total_sq += (x * x).sum()
        done += n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return MgfValue(
        value=float(mean),
        method="monte_carlo",
        s=float(s),
        std_error=math.sqrt(var / (samples - 1)),
    )


def _partial_fraction_sum(lam: np.ndarray, N: int) -> float:
    """sum_j (log lambda_j / lambda_j^N) prod_{i != j} lambda_j / (lambda_j - lambda_i)."""
    total = 0.0
    for j, lj in enumerate(lam):
        others = np.delete(lam, j)
        total += math.log(lj) / lj**N * float(np.prod(lj / (lj - others)))
    return total


def mgf_asymptotic(
    spec: Spectrum, N: int, s: float, refined: bool = False
) -> MgfValue:
    """Large-|s| form of the exact MGF.

    N > M: Gamma(N-M) / (Gamma(N) prod lambda) |s|^-M.
    N = M: log|s| / (Gamma(N) prod lambda |s|^N). With ``refined`` the
        constant terms psi(N) and the log-lambda sum are kept as well.
    N < M: |sum_j (log lambda_j / lambda_j^N) prod_{i!=j} lambda_j/(lambda_j -
        lambda_i)| / (Gamma(N) |s|^N).

    Raises:
        ValueError: If s >= 0, an eigenvalue is zero, or the N <= M forms
            meet repeated eigenvalues
    """
    _check_n(N)
    if s >= 0:
        raise ValueError(f"s must be negative, but got {s}")
    if spec.M < 1 or spec.rank < spec.M:
        raise ValueError("Asymptotic MGF needs all eigenvalues strictly positive")
    lam = spec.lambdas
    M = spec.M
    abs_s = -s
    if N > M:
        value = special.gamma(N - M) / (special.gamma(N) * np.prod(lam)) * abs_s ** (-M)
    else:
        if not spec.is_distinct():
            raise ValueError(
                f"Asymptotic MGF for N <= M needs distinct eigenvalues, got {lam.tolist()}"
            )
        if N == M:
            log_term = math.log(abs_s)
            if refined:
                log_term += special.digamma(N)
            value = log_term / (special.gamma(N) * np.prod(lam) * abs_s**N)
            if refined:
                value += (-1) ** (N - 1) * _partial_fraction_sum(lam, N) / (
                    special.gamma(N) * abs_s**N
                )
        else:
            value = abs(_partial_fraction_sum(lam, N)) / (special.gamma(N) * abs_s**N)
    return MgfValue(value=float(value), method="asymptotic", s=float(s))


@lru_cache(maxsize=None)
def _craig_rule() -> Tuple[np.ndarray, np.ndarray]:
    x, w = _legendre_rule(CRAIG_NODES)
    phi = np.pi / 4.0 * (x + 1.0)
    return phi, w * (np.pi / 4.0) / np.pi


def pep(spec: Spectrum, N: int, es_n0: float) -> PepEstimate:
    """Craig-formula PEP and its Chernoff bound.

    craig = (1/pi) int_0^{pi/2} MGF(-es_n0 / (4 sin^2 phi)) dphi, chernoff =
    MGF(-es_n0 / 4).

    Raises:
        ValueError: If es_n0 <= 0
        QuadratureError: Propagated from the MGF
    """
    if not es_n0 > 0:
        raise ValueError(f"es_n0 must be positive, but got {es_n0}")
    phi, w = _craig_rule()
    s = np.concatenate([-es_n0 / (4.0 * np.sin(phi) ** 2), [-es_n0 / 4.0]])
    values = mgf_values(spec, N, s)
    return PepEstimate(craig=float(values[:-1] @ w), chernoff=float(values[-1]), es_n0=es_n0)


def pep_monte_carlo(
    spec: Spectrum,
    N: int,
    es_n0: float,
    samples: int,
    rng: np.random.Generator,
) -> PepSample:
    """Average of Q(sqrt(es_n0/2 * ||H Omega||^2)) over channel draws."""
    _check_n(N)
    if not es_n0 > 0:
        raise ValueError(f"es_n0 must be positive, but got {es_n0}")
    if samples < 2:
        raise ValueError(f"samples must be at least 2, but got {samples}")
    a = rng.gamma(N, 1.0, samples)
    b = _complex_normal_sq(rng, (samples, spec.M)) @ spec.lambdas
    q = 0.5 * special.erfc(np.sqrt(es_n0 * a * b / 4.0))
    return PepSample(
        value=float(q.mean()),
        std_error=float(q.std(ddof=1) / math.sqrt(samples)),
        samples=samples,
    )


def union_bound(
    code: TrellisCode,
    N: int,
    es_n0: float,
    max_len: Optional[int] = None,
    frame_len: int = 1,
    events: Optional[Sequence[DifferenceMatrix]] = None,
) -> float:
    """Union bound on the error-event probability.

    Sums Craig PEPs weighted by event multiplicity under equiprobable inputs
    (one event start); ``frame_len`` scales it to the number of possible
    start positions in a frame.

    Args:
        code: Trellis code
        N: Destination antennas
        es_n0: E_s/N0 of the pairwise analysis
        max_len: Longest event considered; ``default_max_len(code.M)`` if omitted
        frame_len: Event start positions per frame
        events: Pre-enumerated events (reference "all"); enumerated if omitted
    """
    if frame_len < 1:
        raise ValueError(f"frame_len must be at least 1, but got {frame_len}")
    if events is None:
        events = enumerate_error_events(code, max_len, reference="all", dedup="spectrum")
    total = 0.0
    for event, spec in zip(events, spectra(events)):
        total += event.multiplicity * pep(spec, N, es_n0).craig
    return frame_len * total


def metric_determinant(spec: Spectrum) -> float:
    """prod_i lambda_i of a full-rank event (larger is better)."""
    if spec.rank < spec.M:
        raise ValueError(
            f"Determinant criterion needs a full-rank event, got rank {spec.rank} < {spec.M}"
        )
    return float(np.prod(spec.lambdas))


def metric_log_eig(spec: Spectrum, N: int) -> float:
    """Coefficient of the dominant |s|^-N PEP term for N below the rank.

    (-1)^(N-1) sum_i (log lambda_i / lambda_i^N) prod_{i1 != i} lambda_i /
    (lambda_i - lambda_i1), over the nonzero eigenvalues; smaller is better.

    Raises:
        ValueError: If N >= M, fewer than N+1 eigenvalues are nonzero, or the
            nonzero eigenvalues are not distinct

    Examples:
        >>> round(metric_log_eig(Spectrum.from_lambdas([1.0, 2.0]), 1), 4)
        0.6931
    """
    _check_n(N)
    if N >= spec.M:
        raise ValueError(f"log_eig metric needs N < M, but got N={N}, M={spec.M}")
    if spec.rank <= N:
        raise ValueError(
            f"log_eig metric needs more than N={N} nonzero eigenvalues, got {spec.rank}"
        )
    reduced = Spectrum(spec.positive, spec.rank, spec.rank)
    if not reduced.is_distinct():
        raise ValueError(
            f"log_eig metric needs distinct eigenvalues, got {spec.lambdas.tolist()}"
        )
    return float((-1) ** (N - 1) * _partial_fraction_sum(reduced.lambdas, N))


def fallback_metric(spec: Spectrum, N: int, s_ref: float = S_REF) -> float:
    """Gamma(N) |s_ref|^d MGF(s_ref) with d = min(rank, N).

    Tracks the dominant PEP coefficient without needing distinct or nonzero
    eigenvalues.
    """
    d = min(spec.rank, N)
    return float(special.gamma(N) * abs(s_ref) ** d * mgf_exact(spec, N, s_ref).value)


def _event_metric(spec: Spectrum, N: int, criterion: str) -> Tuple[float, bool]:
    if criterion == "determinant":
        return float(np.prod(spec.positive)) if spec.rank else 0.0, False
    try:
        return metric_log_eig(spec, N), False
    except ValueError:
        return fallback_metric(spec, N), True


def score_code(
    code: TrellisCode,
    N: int,
    max_len: Optional[int] = None,
    events: Optional[Sequence[DifferenceMatrix]] = None,
    scale: float = 1.0,
) -> DesignScore:
    """Score a code with the design rule matching N.

    N >= M uses the determinant criterion (worst = smallest eigenvalue
    product among the lowest-rank events), N < M the log-eigenvalue metric
    (worst = largest metric among events of the code's effective diversity);
    events where that metric is undefined use ``fallback_metric``.

    Args:
        code: Trellis code
        N: Destination antennas
        max_len: Longest event enumerated; ``score_max_len(code.M)`` if omitted
        events: Pre-enumerated events; enumerated if omitted
        scale: Common constellation energy factor applied to every spectrum

    Raises:
        ValueError: If the trellis yields no error events
    """
    _check_n(N)
    if max_len is None:
        max_len = score_max_len(code.M)
    if events is None:
        events = enumerate_error_events(code, max_len, reference="all", dedup="gram")
    if not events:
        raise ValueError(f"Code '{code.name}' has no error events up to length {max_len}")
    specs = spectra(events)
    if scale != 1.0:
        specs = [sp.scaled(scale) for sp in specs]
    M = code.M
    criterion = "determinant" if N >= M else "log_eig"
    min_rank = min(sp.rank for sp in specs)
    diversity = min(min_rank, N)

    rows: List[EventScore] = []
    for i, (event, sp) in enumerate(zip(events, specs)):
        if criterion == "determinant" and sp.rank != min_rank:
            continue
        if criterion == "log_eig" and min(sp.rank, N) != diversity:
            continue
        metric, used_fallback = _event_metric(sp, N, criterion)
        rows.append(
            EventScore(
                index=i,
                event_length=event.event_length,
                lambdas=tuple(float(v) for v in sp.lambdas),
                rank=sp.rank,
                metric=metric,
                fallback=used_fallback,
            )
        )
    # worst first
    rows.sort(key=lambda r: r.metric, reverse=criterion == "log_eig")
    worst = tuple(rows[:WORST_EVENTS])
    return DesignScore(
        min_rank=min_rank,
        worst_metric=worst[0].metric,
        criterion=criterion,
        diversity=diversity,
        tiebreak=float(sum(r.metric for r in worst)),
        num_events=len(events),
        M=M,
        N=N,
        worst_events=worst,
    )
