#!/usr/bin/env python3
"""
Space-time trellis codes.

This module provides:
- The TrellisCode container and the built-in four-state QPSK codes
- Loading and writing figure-style label tables (code catalog files)
- Encoding input streams into MxL space-time codewords
- Enumeration of error events (diverge-and-remerge path pairs) and their
  difference matrices
"""

import os
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

# index u -> exp(i*pi*u/2); kept exact so difference matrices are Gaussian integers
QPSK = np.array([1 + 0j, 1j, -1 + 0j, -1j])

DEFAULT_MAX_LEN = 8
# the M=4 built-ins exceed 10^5 distinct Gram events beyond length 4
WIDE_MAX_LEN = 4
MAX_PATHS = 2_000_000
EVENT_TOLERANCE = 1e-9
SPECTRUM_TOLERANCE = 1e-6

REFERENCES = ("all", "zero")
DEDUP_MODES = ("phase", "gram", "spectrum", "none")


class EnumerationLimitError(RuntimeError):
    """Error-event enumeration outgrew its path-pair budget."""


# Row i = current state i, column u = input u (next state = u).
BUILTIN_TABLES: Dict[str, Tuple[int, str]] = {
    "qpsk4_m2_paper": (
        2,
        """
        00 , 20 , 02 , 22
        01 , 21 , 03 , 23
        11 , 31 , 13 , 33
        12 , 32 , 10 , 30
        """,
    ),
    "qpsk4_m2_tarokh": (
        2,
        """
        00 , 01 , 02 , 03
        10 , 11 , 12 , 13
        20 , 21 , 22 , 23
        30 , 31 , 32 , 33
        """,
    ),
    "qpsk4_m4_paper": (
        4,
        """
        0000 , 2030 , 0012 , 2022
        0101 , 2131 , 0113 , 2123
        1201 , 3231 , 1213 , 3223
        1230 , 3332 , 1310 , 3320
        """,
    ),
    "qpsk4_m4_tarokh": (
        4,
        """
        0000 , 0001 , 0002 , 0003
        1011 , 1012 , 1013 , 1010
        2021 , 2122 , 2223 , 2320
        3032 , 3133 , 3130 , 3231
        """,
    ),
}


@dataclass(frozen=True)
class TrellisCode:
    """Finite-state space-time encoder.

    ``labels[s][u]`` is the M-tuple of constellation indices sent on the
    branch leaving state ``s`` with input ``u``; ``next_states[s][u]`` is
    where that branch ends.
    """

    num_states: int
    num_inputs: int
    M: int
    labels: Tuple[Tuple[Tuple[int, ...], ...], ...]
    next_states: Tuple[Tuple[int, ...], ...]
    name: str = field(default="custom", compare=False)

    def __post_init__(self) -> None:
        if self.num_states < 1 or self.num_inputs < 1 or self.M < 1:
            raise ValueError(
                "num_states, num_inputs and M must be positive, but got "
                f"{self.num_states}, {self.num_inputs}, {self.M}"
            )
        if self.num_inputs > len(QPSK):
            raise ValueError(
                f"num_inputs must be at most {len(QPSK)} for QPSK labels, "
                f"but got {self.num_inputs}"
            )
        if len(self.labels) != self.num_states or len(self.next_states) != self.num_states:
            raise ValueError(
                f"Branch table must have {self.num_states} rows, "
                f"but got {len(self.labels)}"
            )
        for s in range(self.num_states):
            if len(self.labels[s]) != self.num_inputs or len(self.next_states[s]) != self.num_inputs:
                raise ValueError(
                    f"Row {s} must have {self.num_inputs} branches, "
                    f"but got {len(self.labels[s])}"
                )
            for u in range(self.num_inputs):
                label = self.labels[s][u]
                if len(label) != self.M:
                    raise ValueError(
                        f"Label at state {s}, input {u} has {len(label)} digits, "
                        f"expected M={self.M}"
                    )
                if any(d < 0 or d >= self.num_inputs for d in label):
                    raise ValueError(
                        f"Label {label} at state {s}, input {u} has a digit outside "
                        f"0..{self.num_inputs - 1}"
                    )
                if not 0 <= self.next_states[s][u] < self.num_states:
                    raise ValueError(
                        f"Next state {self.next_states[s][u]} at state {s}, input {u} "
                        f"is outside 0..{self.num_states - 1}"
                    )

    @property
    def branch_table(self) -> Dict[Tuple[int, int], Tuple[Tuple[int, ...], int]]:
        return {
            (s, u): (self.labels[s][u], self.next_states[s][u])
            for s in range(self.num_states)
            for u in range(self.num_inputs)
        }

    def branch(self, state: int, u: int) -> Tuple[Tuple[int, ...], int]:
        """Return (label, next_state) for one branch."""
        return self.labels[state][u], self.next_states[state][u]

    @cached_property
    def symbols(self) -> np.ndarray:
        """Branch output symbols, shape (num_states, num_inputs, M)."""
        return qpsk_symbols(self.labels)

    @cached_property
    def next_array(self) -> np.ndarray:
        return np.array(self.next_states, dtype=int)

    @property
    def bits_per_input(self) -> int:
        return max(1, (self.num_inputs - 1).bit_length())

    def table_text(self) -> str:
        """Figure-style rendering, one row per state."""
        return "\n".join(
            " , ".join("".join(str(d) for d in label) for label in row)
            for row in self.labels
        )


@dataclass(frozen=True, eq=False)
class DifferenceMatrix:
    """Difference matrix of one error event.

    ``multiplicity`` is the probability weight of the merged path pairs
    (pi(start) * q**-L each, or 1 per competitor under the all-zero
    reference) and ``count`` the number of pairs merged into this entry.
    """

    omega: np.ndarray
    event_length: int
    weight: int
    start_state: int = 0
    multiplicity: float = 1.0
    count: int = 1

    @property
    def M(self) -> int:
        return self.omega.shape[0]

    @property
    def gram(self) -> np.ndarray:
        return self.omega @ self.omega.conj().T


def qpsk_map(index: int) -> complex:
    """Map a QPSK index u to exp(i*pi*u/2).

    Examples:
        >>> qpsk_map(0)
        (1+0j)
        >>> qpsk_map(2)
        (-1+0j)

    Raises:
        ValueError: If index is not an integer in 0..3
    """
    if isinstance(index, bool) or not isinstance(index, (int, np.integer)):
        raise ValueError(f"QPSK index must be an integer, but got {index!r}")
    if not 0 <= index < len(QPSK):
        raise ValueError(f"QPSK index must be in 0..3, but got {index}")
    return complex(QPSK[index])


def qpsk_symbols(indices: Union[Sequence[int], np.ndarray]) -> np.ndarray:
    """Vectorized qpsk_map."""
    arr = np.asarray(indices, dtype=int)
    if arr.size and (arr.min() < 0 or arr.max() >= len(QPSK)):
        raise ValueError("QPSK indices must be in 0..3")
    return QPSK[arr]


def _split_rows(rows: Union[str, Sequence]) -> List[List[str]]:
    if isinstance(rows, str):
        lines = []
        for raw in rows.replace("/", "\n").splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line)
        rows = lines
    table = []
    for row in rows:
        if isinstance(row, str):
            cells = row.replace(",", " ").split()
        else:
            cells = ["".join(str(d) for d in cell) if not isinstance(cell, str) else cell for cell in row]
        table.append(cells)
    return table


def code_from_labels(
    rows: Union[str, Sequence],
    M: int,
    num_states: int,
    num_inputs: int = 4,
    name: str = "custom",
) -> TrellisCode:
    """Build an input-driven code from a figure-style label table.

    Args:
        rows: Text table (one row per state, labels separated by commas or
            whitespace; rows split by newlines or '/') or a sequence of rows
        M: Digits per label (transmit antennas)
        num_states: Expected number of rows
        num_inputs: Expected labels per row (constellation size)
        name: Code name

    Returns:
        TrellisCode with next_state = column index

    Raises:
        ValueError: On wrong row/column counts or malformed digits
    """
    table = _split_rows(rows)
    if len(table) != num_states:
        raise ValueError(f"Expected {num_states} rows, but got {len(table)}")
    if num_inputs > num_states:
        raise ValueError(
            f"Input-driven tables need num_inputs <= num_states, "
            f"but got {num_inputs} > {num_states}"
        )
    labels = []
    for s, cells in enumerate(table):
        if len(cells) != num_inputs:
            raise ValueError(
                f"Row {s} has {len(cells)} labels, expected {num_inputs}"
            )
        row = []
        for cell in cells:
            if len(cell) != M or not cell.isdigit():
                raise ValueError(f"Label '{cell}' in row {s} is not {M} digits")
            digits = tuple(int(c) for c in cell)
            if max(digits) >= num_inputs:
                raise ValueError(
                    f"Label '{cell}' in row {s} has a digit >= {num_inputs}"
                )
            row.append(digits)
        labels.append(tuple(row))
    next_states = tuple(tuple(range(num_inputs)) for _ in range(num_states))
    return TrellisCode(
        num_states=num_states,
        num_inputs=num_inputs,
        M=M,
        labels=tuple(labels),
        next_states=next_states,
        name=name,
    )


def builtin_codes() -> Dict[str, TrellisCode]:
    """The four-state QPSK codes of the label-table figures, keyed by name."""
    return {
        name: code_from_labels(table, M=M, num_states=4, num_inputs=4, name=name)
        for name, (M, table) in BUILTIN_TABLES.items()
    }


def dump_catalog(code: TrellisCode) -> str:
    """Render a code in catalog format (header line, then one row per state).

    Only input-driven codes (next_state = input) can be represented.
    """
    expected = tuple(tuple(range(code.num_inputs)) for _ in range(code.num_states))
    if code.next_states != expected:
        raise ValueError(f"Code '{code.name}' is not input-driven; no catalog form")
    lines = [f"# {code.name}", f"{code.M} {code.num_states} {code.num_inputs}"]
    for row in code.labels:
        lines.append(" ".join("".join(str(d) for d in label) for label in row))
    return "\n".join(lines) + "\n"


def write_catalog(code: TrellisCode, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_catalog(code))
    return path


def load_catalog(path: str, name: Optional[str] = None) -> TrellisCode:
    """Read a code catalog file.

    Format: line 1 "M num_states num_inputs", then num_states lines of
    num_inputs whitespace-separated M-digit labels; '#' starts a comment.

    Raises:
        ValueError: If the file is unreadable or malformed
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ValueError(f"Cannot read code catalog '{path}': {e}")
    lines = [
        line.split("#", 1)[0].strip() for line in text.splitlines()
    ]
    lines = [line for line in lines if line]
    if not lines:
        raise ValueError(f"Code catalog '{path}' is empty")
    try:
        M, num_states, num_inputs = (int(x) for x in lines[0].split())
    except ValueError:
        raise ValueError(
            f"Catalog header must be 'M num_states num_inputs', got '{lines[0]}'"
        )
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    return code_from_labels(lines[1:], M, num_states, num_inputs, name=name)


def get_code(ref: str) -> TrellisCode:
    """Resolve a built-in code name or a catalog file path."""
    codes = builtin_codes()
    if ref in codes:
        return codes[ref]
    if os.path.isfile(ref):
        return load_catalog(ref)
    raise ValueError(
        f"Unknown code '{ref}'. Built-in codes: {', '.join(codes)}; "
        "or give a catalog file path"
    )


def _check_state(code: TrellisCode, state: int) -> None:
    if not 0 <= state < code.num_states:
        raise ValueError(
            f"State must be in 0..{code.num_states - 1}, but got {state}"
        )


def walk(
    code: TrellisCode, inputs: Iterable[int], initial_state: int = 0
) -> Tuple[List[Tuple[int, ...]], int]:
    """Follow the trellis; return the branch labels and the final state."""
    _check_state(code, initial_state)
    state = initial_state
    labels = []
    for u in inputs:
        if not 0 <= u < code.num_inputs:
            raise ValueError(f"Input must be in 0..{code.num_inputs - 1}, but got {u}")
        label, state = code.branch(state, int(u))
        labels.append(label)
    return labels, state


def encode(
    code: TrellisCode, inputs: Iterable[int], initial_state: int = 0
) -> np.ndarray:
    """Encode an input stream into an MxL codeword (one column per channel use).

    Examples:
        >>> encode(builtin_codes()["qpsk4_m2_tarokh"], [1, 0])
        array([[1.+0.j, 0.+1.j],
               [0.+1.j, 1.+0.j]])
    """
    labels, _ = walk(code, inputs, initial_state)
    if not labels:
        return np.zeros((code.M, 0), dtype=complex)
    return qpsk_symbols(labels).T


def termination_inputs(code: TrellisCode, state: int) -> Tuple[int, ...]:
    """Shortest input sequence driving ``state`` back to state 0.

    Raises:
        ValueError: If state 0 is unreachable from ``state``
    """
    _check_state(code, state)
    prev: Dict[int, Tuple[int, int]] = {state: (-1, -1)}
    queue = deque([state])
    while queue:
        s = queue.popleft()
        if s == 0:
            break
        for u in range(code.num_inputs):
            t = code.next_states[s][u]
            if t not in prev:
                prev[t] = (s, u)
                queue.append(t)
    if 0 not in prev:
        raise ValueError(f"State 0 is unreachable from state {state} in '{code.name}'")
    path = []
    s = 0
    while s != state:
        s, u = prev[s]
        path.append(u)
    return tuple(reversed(path))


def relabel_states(code: TrellisCode, perm: Sequence[int]) -> TrellisCode:
    """Rename state s to perm[s]; the code's branches are otherwise unchanged."""
    if sorted(perm) != list(range(code.num_states)):
        raise ValueError(f"perm must be a permutation of 0..{code.num_states - 1}")
    labels = [[()] * code.num_inputs for _ in range(code.num_states)]
    next_states = [[0] * code.num_inputs for _ in range(code.num_states)]
    for (s, u), (label, t) in code.branch_table.items():
        labels[perm[s]][u] = label
        next_states[perm[s]][u] = perm[t]
    return TrellisCode(
        code.num_states,
        code.num_inputs,
        code.M,
        tuple(tuple(row) for row in labels),
        tuple(tuple(row) for row in next_states),
        name=f"{code.name}-relabelled",
    )


@dataclass
class _Paths:
    """Partial path pairs sharing a state pair, stored column-stacked."""

    cols: np.ndarray  # (K, M, length)
    weight: np.ndarray
    mult: np.ndarray
    count: np.ndarray
    start: np.ndarray

    def __len__(self) -> int:
        return self.cols.shape[0]

    @staticmethod
    def concat(chunks: List["_Paths"]) -> "_Paths":
        if len(chunks) == 1:
            return chunks[0]
        return _Paths(
            np.concatenate([c.cols for c in chunks]),
            np.concatenate([c.weight for c in chunks]),
            np.concatenate([c.mult for c in chunks]),
            np.concatenate([c.count for c in chunks]),
            np.concatenate([c.start for c in chunks]),
        )

    def take(self, idx: np.ndarray) -> "_Paths":
        return _Paths(
            self.cols[idx], self.weight[idx], self.mult[idx], self.count[idx], self.start[idx]
        )

    def extend(self, omega: np.ndarray, step_mult: float) -> "_Paths":
        """Append one branch difference column to every path pair."""
        K, M = self.cols.shape[:2]
        cols = np.concatenate(
            [self.cols, np.broadcast_to(omega[None, :, None], (K, M, 1))], axis=2
        )
        differs = int(np.any(np.abs(omega) > EVENT_TOLERANCE))
        return _Paths(
            cols, self.weight + differs, self.mult * step_mult, self.count, self.start
        )


def _grams(cols: np.ndarray) -> np.ndarray:
    return np.einsum("kmt,knt->kmn", cols, cols.conj())


def _gram_keys(cols: np.ndarray) -> np.ndarray:
    G = _grams(cols)
    K = G.shape[0]
    flat = np.concatenate([G.real.reshape(K, -1), G.imag.reshape(K, -1)], axis=1)
    return np.rint(flat / EVENT_TOLERANCE).astype(np.int64)


def _spectrum_keys(cols: np.ndarray) -> np.ndarray:
    """Keys identifying the eigenvalues of Omega Omega^H."""
    lam = np.clip(np.linalg.eigvalsh(_grams(cols)), 0.0, None)
    return np.rint(lam / SPECTRUM_TOLERANCE).astype(np.int64)


def _phase_keys(cols: np.ndarray) -> np.ndarray:
    """Keys identifying Omega up to multiplication by a unit-modulus scalar."""
    K = cols.shape[0]
    flat = np.transpose(cols, (0, 2, 1)).reshape(K, -1)
    mask = np.abs(flat) > EVENT_TOLERANCE
    first = mask.argmax(axis=1)
    z = flat[np.arange(K), first]
    rot = np.where(mask.any(axis=1), z.conj() / np.where(mask.any(axis=1), np.abs(z), 1.0), 1.0)
    flat = flat * rot[:, None]
    parts = np.concatenate([flat.real, flat.imag], axis=1)
    return np.rint(parts / EVENT_TOLERANCE).astype(np.int64)


_KEYS = {"phase": _phase_keys, "gram": _gram_keys, "spectrum": _spectrum_keys}


def _group(keys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """First index of each distinct key row in discovery order, and the
    group number of every row."""
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    group = np.empty_like(order)
    group[order] = np.arange(len(order))
    return first[order], group[inverse.reshape(-1)]


def _merge(paths: _Paths, keys: np.ndarray) -> _Paths:
    first, group = _group(keys)
    merged = paths.take(first)
    merged.mult = np.bincount(group, weights=paths.mult, minlength=len(first))
    merged.count = np.bincount(group, weights=paths.count, minlength=len(first)).astype(int)
    return merged


def _limit(code: TrellisCode, pending: int, max_paths: int, length: int) -> EnumerationLimitError:
    return EnumerationLimitError(
        f"Error-event enumeration for '{code.name}' needs {pending} live path pairs "
        f"at length {length}, more than {max_paths}; lower max_len or use dedup='gram'"
    )


def default_max_len(M: int) -> int:
    """Default longest error event for M transmit antennas."""
    return DEFAULT_MAX_LEN if M <= 2 else WIDE_MAX_LEN


def enumerate_error_events(
    code: TrellisCode,
    max_len: Optional[int] = None,
    reference: str = "all",
    dedup: str = "phase",
    max_paths: int = MAX_PATHS,
) -> List[DifferenceMatrix]:
    """Enumerate diverge-and-remerge path pairs up to ``max_len`` branches.

    Both paths start in the same state, take different inputs on the first
    branch and meet again for the first time after the last branch.

    Args:
        code: Trellis code
        max_len: Longest event, in branches (>= 2); ``default_max_len(code.M)``
            if omitted
        reference: "all" pairs every reference path with every competitor;
            "zero" fixes the reference to the all-zero path from state 0
        dedup: "phase" merges events whose Omega agree up to a unit-modulus
            scalar, "gram" merges equal Omega Omega^H (partial paths included),
            "spectrum" also merges finished events with equal eigenvalues of
            Omega Omega^H, "none" keeps every pair
        max_paths: Abort when the path pairs held for one state pair, or the
            live total, exceed this

    Returns:
        Events ordered by length, then by merge state and discovery

    Raises:
        ValueError: If max_len < 2, an option is unknown or the all-zero path
            is not a self-loop
        EnumerationLimitError: If the enumeration exceeds max_paths
    """
    if max_len is None:
        max_len = default_max_len(code.M)
    if max_len < 2:
        raise ValueError(f"max_len must be at least 2, but got {max_len}")
    if reference not in REFERENCES:
        raise ValueError(f"reference must be one of {REFERENCES}, but got {reference!r}")
    if dedup not in DEDUP_MODES:
        raise ValueError(f"dedup must be one of {DEDUP_MODES}, but got {dedup!r}")

    S, q, M = code.num_states, code.num_inputs, code.M
    sym = code.symbols
    nxt = code.next_array
    if reference == "zero":
        if nxt[0, 0] != 0:
            raise ValueError(
                "The all-zero reference needs state 0, input 0 to loop back to state 0"
            )
        starts: Sequence[int] = [0]
        start_mult, step_mult = 1.0, 1.0
        ref_inputs: Sequence[int] = [0]
    else:
        starts = range(S)
        start_mult, step_mult = 1.0 / S, 1.0 / q
        ref_inputs = range(q)

    frontier: Dict[Tuple[int, int], _Paths] = {}
    for s0 in starts:
        frontier[(s0, s0)] = _Paths(
            np.zeros((1, M, 0), dtype=complex),
            np.zeros(1, dtype=int),
            np.full(1, start_mult),
            np.ones(1, dtype=int),
            np.full(1, s0, dtype=int),
        )

    merge_live = dedup in ("gram", "spectrum")
    finished: List[_Paths] = []
    for length in range(1, max_len + 1):
        # branches grouped by the state pair they lead to
        routes: Dict[Tuple[int, int], List[Tuple[Tuple[int, int], int, int]]] = defaultdict(list)
        for (s, sp) in frontier:
            for u in ref_inputs:
                for v in range(q):
                    if s == sp and u == v:
                        continue
                    routes[(int(nxt[s, u]), int(nxt[sp, v]))].append(((s, sp), u, v))

        following: Dict[Tuple[int, int], _Paths] = {}
        live = 0
        for key in sorted(routes):
            remerged = key[0] == key[1]
            if not remerged and length == max_len:
                continue
            pending = sum(len(frontier[src]) for src, _, _ in routes[key])
            if pending > max_paths:
                raise _limit(code, pending, max_paths, length)
            paths = _Paths.concat(
                [
                    frontier[src].extend(sym[src[0], u] - sym[src[1], v], step_mult)
                    for src, u, v in routes[key]
                ]
            )
            if remerged:
                if dedup != "none":
                    paths = _merge(paths, _KEYS[dedup](paths.cols))
                finished.append(paths)
                continue
            if merge_live:
                paths = _merge(paths, _gram_keys(paths.cols))
            live += len(paths)
            if live > max_paths:
                raise _limit(code, live, max_paths, length)
            following[key] = paths
        frontier = following
        if not frontier:
            break

    return _collect_events(finished, dedup)


def _collect_events(finished: List[_Paths], dedup: str) -> List[DifferenceMatrix]:
    """Merge the per-length event batches across lengths."""
    finished = [paths for paths in finished if len(paths)]
    if dedup == "none":
        return [_event(paths, k) for paths in finished for k in range(len(paths))]
    if dedup == "phase":
        # phase keys depend on the event length, so each length is final
        batches = []
        for length in sorted({paths.cols.shape[2] for paths in finished}):
            same = _Paths.concat([p for p in finished if p.cols.shape[2] == length])
            batches.append(_merge(same, _phase_keys(same.cols)))
        return [_event(paths, k) for paths in batches for k in range(len(paths))]
    if not finished:
        return []

    keys = np.concatenate([_KEYS[dedup](paths.cols) for paths in finished])
    batch = np.concatenate([np.full(len(p), i) for i, p in enumerate(finished)])
    row = np.concatenate([np.arange(len(p)) for p in finished])
    first, group = _group(keys)
    mult = np.bincount(
        group, weights=np.concatenate([p.mult for p in finished]), minlength=len(first)
    )
    count = np.bincount(
        group, weights=np.concatenate([p.count for p in finished]), minlength=len(first)
    )
    return [
        replace(
            _event(finished[batch[i]], int(row[i])),
            multiplicity=float(mult[j]),
            count=int(count[j]),
        )
        for j, i in enumerate(first)
    ]


def _event(paths: _Paths, k: int) -> DifferenceMatrix:
    omega = np.array(paths.cols[k])
    return DifferenceMatrix(
        omega=omega,
        event_length=omega.shape[1],
        weight=int(paths.weight[k]),
        start_state=int(paths.start[k]),
        multiplicity=float(paths.mult[k]),
        count=int(paths.count[k]),
    )
