#!/usr/bin/env python3
"""
Search over label tables for codes that score best under the design rule.

Candidates are input-driven tables (next state = input) drawn at random,
enumerated exhaustively, or listed explicitly. Each candidate is scored with
``analysis.score_code``; the ranking is deterministic for a given seed and
independent of the number of workers.
"""

import hashlib
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from .analysis import DesignScore, score_code, score_max_len, spectra
from .trellis import (
    DifferenceMatrix,
    TrellisCode,
    enumerate_error_events,
    write_catalog,
)
from .utils import format_number, get_worker_count, write_csv

MODES = ("exhaustive", "random", "listed")
EXHAUSTIVE_MAX_DIGITS = 16
DEFAULT_BUDGET = 100_000
MAX_DRAWS = 1000
CHUNK_SIZE = 32
# best-per-signature entries held before pruning to top_k
KEEP_FACTOR = 4

RANKING_HEADER = [
    "rank",
    "name_or_hash",
    "min_rank",
    "worst_metric",
    "criterion",
    "diversity",
    "tiebreak",
]


@dataclass(frozen=True)
class SearchSpace:
    """Candidate label tables.

    Args:
        M: Transmit antennas (digits per label)
        num_states: Trellis states
        num_inputs: Inputs per state (QPSK: 4)
        mode: "exhaustive", "random" or "listed"
        budget: Number of random candidates
        first_row_identity: Fix the state-0, input-0 label to all zeros
        distinct_rows: Reject tables with two identical rows
        candidates: Codes scored in "listed" mode
    """

    M: int = 2
    num_states: int = 4
    num_inputs: int = 4
    mode: str = "random"
    budget: int = DEFAULT_BUDGET
    first_row_identity: bool = True
    distinct_rows: bool = True
    candidates: Tuple[TrellisCode, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, but got '{self.mode}'")
        if self.mode == "listed":
            if not self.candidates:
                raise ValueError("listed mode needs at least one candidate code")
            for code in self.candidates:
                if code.M != self.M:
                    raise ValueError(
                        f"Candidate '{code.name}' has M={code.M}, expected M={self.M}"
                    )
            return
        if self.M < 1 or self.num_states < 1 or self.num_inputs < 1:
            raise ValueError("M, num_states and num_inputs must be positive")
        if self.num_inputs > self.num_states:
            raise ValueError(
                f"Input-driven tables need num_inputs <= num_states, "
                f"but got {self.num_inputs} > {self.num_states}"
            )
        if self.mode == "exhaustive" and self.free_digits > EXHAUSTIVE_MAX_DIGITS:
            raise ValueError(
                f"Exhaustive search allows at most {EXHAUSTIVE_MAX_DIGITS} free digits, "
                f"this space has {self.free_digits}; use random mode"
            )
        if self.mode == "random" and self.budget < 1:
            raise ValueError(f"budget must be at least 1, but got {self.budget}")

    @property
    def free_digits(self) -> int:
        cells = self.M * self.num_states * self.num_inputs
        return cells - (self.M if self.first_row_identity else 0)

    @property
    def size(self) -> int:
        """Number of candidate indices the mode walks over."""
        if self.mode == "listed":
            return len(self.candidates)
        if self.mode == "random":
            return self.budget
        return self.num_inputs**self.free_digits


@dataclass(frozen=True)
class RankedCode:
    code: TrellisCode
    score: DesignScore
    rank_position: int


@dataclass(frozen=True)
class CodeComparison:
    """Outcome of ``compare_codes``; ``ordering`` is -1 when ``a`` wins,
    1 when ``b`` wins and 0 on a tie."""

    winner: str
    ordering: int
    score_a: DesignScore
    score_b: DesignScore
    report: str


def _digits_ok(digits: np.ndarray, space: SearchSpace) -> bool:
    if space.first_row_identity and np.any(digits[0, 0]):
        return False
    if space.distinct_rows:
        rows = {digits[s].tobytes() for s in range(digits.shape[0])}
        if len(rows) < digits.shape[0]:
            return False
    return True


def _code_from_digits(digits: np.ndarray, name: str) -> TrellisCode:
    S, q, _ = digits.shape
    return TrellisCode(
        num_states=S,
        num_inputs=q,
        M=digits.shape[2],
        labels=tuple(
            tuple(tuple(int(d) for d in digits[s, u]) for u in range(q)) for s in range(S)
        ),
        next_states=tuple(tuple(range(q)) for _ in range(S)),
        name=name,
    )


def random_candidate(space: SearchSpace, seed: int, index: int) -> TrellisCode:
    """Candidate ``index`` of the random space, drawn from its own stream."""
    rng = np.random.default_rng([seed, index])
    shape = (space.num_states, space.num_inputs, space.M)
    for _ in range(MAX_DRAWS):
        digits = rng.integers(0, space.num_inputs, shape)
        if space.first_row_identity:
            digits[0, 0] = 0
        if _digits_ok(digits, space):
            return _code_from_digits(digits, f"rand-{seed}-{index}")
    raise ValueError(f"No table satisfying the constraints after {MAX_DRAWS} draws")


def exhaustive_candidate(space: SearchSpace, index: int) -> Optional[TrellisCode]:
    """Table number ``index`` in base-num_inputs order, or None if it breaks
    a constraint."""
    free = np.zeros(space.free_digits, dtype=int)
    rest = index
    for k in range(space.free_digits - 1, -1, -1):
        rest, free[k] = divmod(rest, space.num_inputs)
    flat = np.concatenate([np.zeros(space.M, dtype=int), free]) if space.first_row_identity else free
    digits = flat.reshape(space.num_states, space.num_inputs, space.M)
    if not _digits_ok(digits, space):
        return None
    return _code_from_digits(digits, f"exh-{index}")


def _candidate(space: SearchSpace, seed: int, index: int) -> Optional[TrellisCode]:
    if space.mode == "listed":
        return space.candidates[index]
    if space.mode == "random":
        return random_candidate(space, seed, index)
    return exhaustive_candidate(space, index)


def spectrum_signature(
    code: TrellisCode,
    max_len: Optional[int] = None,
    events: Optional[Sequence[DifferenceMatrix]] = None,
) -> Tuple:
    """Multiset of event spectra with their total multiplicities.

    Codes with equal signatures are equivalent for every PEP-based measure.
    """
    if events is None:
        if max_len is None:
            max_len = score_max_len(code.M)
        events = enumerate_error_events(code, max_len, reference="all", dedup="gram")
    totals: Dict[Tuple[float, ...], float] = {}
    for event, sp in zip(events, spectra(events)):
        key = tuple(float(v) for v in np.round(sp.lambdas, 6))
        totals[key] = totals.get(key, 0.0) + event.multiplicity
    return tuple(sorted((k, round(v, 10)) for k, v in totals.items()))


def _score_chunk(
    space: SearchSpace, N: int, max_len: int, seed: int, start: int, stop: int
) -> List[Tuple[int, TrellisCode, DesignScore, Tuple]]:
    out = []
    for index in range(start, stop):
        code = _candidate(space, seed, index)
        if code is None:
            continue
        events = enumerate_error_events(code, max_len, reference="all", dedup="gram")
        score = score_code(code, N, max_len, events=events)
        out.append((index, code, score, spectrum_signature(code, max_len, events)))
    return out


def _table_key(code: TrellisCode) -> Tuple:
    return (code.labels, code.next_states)


def _rank_key(result: Tuple[int, TrellisCode, DesignScore, Tuple]) -> Tuple:
    index, code, score, _ = result
    return (score.score_key(), _table_key(code), index)


def code_hash(code: TrellisCode) -> str:
    """Short stable identifier of a label table."""
    text = repr(_table_key(code)).encode("utf-8")
    return hashlib.sha1(text).hexdigest()[:10]


def search_codes(
    space: SearchSpace,
    N: int,
    max_len: Optional[int] = None,
    seed: int = 0,
    top_k: Optional[int] = 10,
    workers: Optional[int] = None,
    progress: bool = False,
) -> List[RankedCode]:
    """Score every candidate and return the best, deduplicated, in rank order.

    Ties after the score are broken by the label table. Codes whose event
    spectra coincide with a better-ranked code are dropped. Candidates are
    generated chunk by chunk and only the best code per spectrum signature
    is held, so memory stays bounded for large spaces.

    Args:
        space: Candidate space
        N: Destination antennas
        max_len: Longest error event used for scoring; ``score_max_len(M)``
            if omitted
        seed: Master seed; candidate i uses the stream [seed, i]
        top_k: Number of codes to return (None for all)
        workers: Worker cap (also capped by STTC_AF_THREADS)
        progress: Show a progress bar

    Raises:
        ValueError: If no candidate satisfies the constraints
    """
    if max_len is None:
        max_len = score_max_len(space.M)
    chunks = (
        (start, min(start + CHUNK_SIZE, space.size))
        for start in range(0, space.size, CHUNK_SIZE)
    )
    n_jobs = get_worker_count(workers)
    best: Dict[Tuple, Tuple[int, TrellisCode, DesignScore, Tuple]] = {}
    with tqdm(total=space.size, desc="Scoring", unit="codes", disable=not progress) as pbar:
        if n_jobs > 1 and space.size > CHUNK_SIZE:
            parallel = Parallel(n_jobs=n_jobs, return_as="generator")
            stream = parallel(
                delayed(_score_chunk)(space, N, max_len, seed, start, stop)
                for start, stop in chunks
            )
        else:
            stream = (
                _score_chunk(space, N, max_len, seed, start, stop) for start, stop in chunks
            )
        for scored in stream:
            for result in scored:
                held = best.get(result[3])
                if held is None or _rank_key(result) < _rank_key(held):
                    best[result[3]] = result
            if top_k is not None and len(best) > KEEP_FACTOR * top_k:
                kept = sorted(best.values(), key=_rank_key)[:top_k]
                best = {r[3]: r for r in kept}
            pbar.update(min(CHUNK_SIZE, space.size - pbar.n))
    if not best:
        raise ValueError("The search space is empty after applying the constraints")

    results = sorted(best.values(), key=_rank_key)
    if top_k is not None:
        results = results[:top_k]
    return [
        RankedCode(code=code, score=score, rank_position=position)
        for position, (_, code, score, _) in enumerate(results, start=1)
    ]


def _worst_table(score: DesignScore) -> List[str]:
    lines = [f"  {'event':>5} {'L':>3} {'rank':>4} {'metric':>14}  lambdas"]
    for row in score.worst_events:
        lams = ", ".join(format_number(v) for v in row.lambdas)
        flag = " *" if row.fallback else ""
        lines.append(
            f"  {row.index:>5} {row.event_length:>3} {row.rank:>4} "
            f"{format_number(row.metric):>14}  ({lams}){flag}"
        )
    return lines


def compare_codes(
    a: TrellisCode, b: TrellisCode, N: int, max_len: Optional[int] = None
) -> CodeComparison:
    """Rank two codes with the same comparator as ``search_codes``.

    Raises:
        ValueError: If the codes have different M
    """
    if a.M != b.M:
        raise ValueError(f"Cannot compare codes with M={a.M} and M={b.M}")
    if max_len is None:
        max_len = score_max_len(a.M)
    score_a = score_code(a, N, max_len)
    score_b = score_code(b, N, max_len)
    key_a, key_b = score_a.score_key(), score_b.score_key()
    ordering = (key_a > key_b) - (key_a < key_b)
    winner = {-1: a.name, 0: "tie", 1: b.name}[ordering]
    report = [
        f"criterion: {score_a.criterion} (M={a.M}, N={N}, max_len={max_len})",
        f"winner: {winner}",
    ]
    for code, score in ((a, score_a), (b, score_b)):
        report.append(
            f"{code.name}: min_rank={score.min_rank} diversity={score.diversity} "
            f"worst_metric={format_number(score.worst_metric)} "
            f"tiebreak={format_number(score.tiebreak)} events={score.num_events}"
        )
        report.extend(_worst_table(score))
    if any(r.fallback for s in (score_a, score_b) for r in s.worst_events):
        report.append("  * metric from the exact MGF at the reference argument")
    return CodeComparison(
        winner=winner,
        ordering=ordering,
        score_a=score_a,
        score_b=score_b,
        report="\n".join(report),
    )


def _display_name(code: TrellisCode) -> str:
    if code.name.startswith(("rand-", "exh-")):
        return code_hash(code)
    return code.name


def write_ranking_csv(ranked: Sequence[RankedCode], path: str) -> str:
    rows = [
        [
            r.rank_position,
            _display_name(r.code),
            r.score.min_rank,
            r.score.worst_metric,
            r.score.criterion,
            r.score.diversity,
            r.score.tiebreak,
        ]
        for r in ranked
    ]
    return write_csv(path, RANKING_HEADER, rows)


def write_catalogs(ranked: Sequence[RankedCode], directory: str) -> List[str]:
    """One catalog file per ranked code, named ``<rank>_<name>.txt``."""
    paths = []
    for r in ranked:
        name = _display_name(r.code)
        path = os.path.join(directory, f"{r.rank_position:03d}_{name}.txt")
        paths.append(write_catalog(r.code, path))
    return paths
