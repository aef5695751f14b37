import itertools
import tempfile

import numpy as np
import pytest

from ..trellis import QPSK, builtin_codes, walk


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


@pytest.fixture(scope="session")
def codes():
    """The built-in codes keyed by name."""
    return builtin_codes()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def isolated_prefs(tmp_path, monkeypatch):
    """Keep every test away from the user's preferences and thread cap."""
    from .. import preferences

    monkeypatch.delenv("STTC_AF_PREFS", raising=False)
    monkeypatch.delenv("STTC_AF_THREADS", raising=False)
    monkeypatch.setattr(preferences, "PREFS_PATH", str(tmp_path / "prefs.json"))


def brute_force_events(code, max_len):
    """Every ordered diverge-and-remerge path pair, by exhaustive search.

    Returns a list of (omega, start_state, probability weight).
    """
    S, q = code.num_states, code.num_inputs
    out = []
    for start in range(S):
        for L in range(1, max_len + 1):
            for ref in itertools.product(range(q), repeat=L):
                ref_states = _states(code, start, ref)
                for comp in itertools.product(range(q), repeat=L):
                    if comp[0] == ref[0]:
                        continue
                    comp_states = _states(code, start, comp)
                    if ref_states[-1] != comp_states[-1]:
                        continue
                    if any(a == b for a, b in zip(ref_states[1:-1], comp_states[1:-1])):
                        continue
                    omega = _codeword(code, start, ref) - _codeword(code, start, comp)
                    out.append((omega, start, 1.0 / S * float(q) ** -L))
    return out


def _states(code, start, inputs):
    states = [start]
    for u in inputs:
        states.append(code.next_states[states[-1]][u])
    return states


def _codeword(code, start, inputs):
    labels, _ = walk(code, inputs, start)
    return QPSK[np.array(labels, dtype=int)].T


def phase_key(omega, tol=1e-9):
    flat = omega.T.ravel()
    nz = np.flatnonzero(np.abs(flat) > tol)
    if nz.size:
        z = flat[nz[0]]
        flat = flat * (z.conj() / abs(z))
    parts = np.concatenate([flat.real, flat.imag])
    return (omega.shape, tuple(np.rint(parts / tol).astype(np.int64)))


def brute_force_ml(code, metrics, terminated=True):
    """Best input sequence by scoring all num_inputs**L paths from state 0."""
    L = metrics.shape[0]
    best, best_inputs = -np.inf, None
    for inputs in itertools.product(range(code.num_inputs), repeat=L):
        state, total = 0, 0.0
        for t, u in enumerate(inputs):
            total += metrics[t, state, u]
            state = code.next_states[state][u]
        if terminated and state != 0:
            continue
        if total > best:
            best, best_inputs = total, inputs
    return np.array(best_inputs)


def all_input_paths(code, L):
    """Every input sequence of length L from state 0 with its state path."""
    inputs = np.array(list(itertools.product(range(code.num_inputs), repeat=L)), dtype=int)
    states = np.zeros((inputs.shape[0], L + 1), dtype=int)
    nxt = np.array(code.next_states, dtype=int)
    for t in range(L):
        states[:, t + 1] = nxt[states[:, t], inputs[:, t]]
    return inputs, states


def brute_force_ml_paths(paths, metrics, terminated=True):
    """brute_force_ml over precomputed ``all_input_paths``."""
    inputs, states = paths
    L = inputs.shape[1]
    totals = metrics[np.arange(L), states[:, :L], inputs].sum(axis=1)
    if terminated:
        totals = np.where(states[:, L] == 0, totals, -np.inf)
    return inputs[int(np.argmax(totals))]
