import os

import numpy as np
import pytest

from ..analysis import score_code
from ..search import (
    RANKING_HEADER,
    SearchSpace,
    code_hash,
    compare_codes,
    exhaustive_candidate,
    random_candidate,
    search_codes,
    spectrum_signature,
    write_catalogs,
    write_ranking_csv,
)
from ..trellis import DifferenceMatrix, load_catalog, relabel_states
from ..utils import read_csv
from .conftest import brute_force_events

SMALL = dict(M=1, num_states=2, num_inputs=2, mode="exhaustive")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mode": "greedy"},
        {"mode": "listed"},
        {"mode": "random", "budget": 0},
        {"num_states": 2, "num_inputs": 4},
        {"mode": "exhaustive"},
    ],
)
def test_space_rejects(kwargs):
    """Test invalid search space settings."""
    with pytest.raises(ValueError):
        SearchSpace(**kwargs)


def test_listed_space_checks_m(codes):
    """Test that listed candidates must share M."""
    with pytest.raises(ValueError, match="M=4"):
        SearchSpace(M=2, mode="listed", candidates=(codes["qpsk4_m4_paper"],))


def test_exhaustive_indexing():
    """Test candidate numbering in a tiny exhaustive space."""
    space = SearchSpace(**SMALL)
    assert space.free_digits == 3
    assert space.size == 8
    assert exhaustive_candidate(space, 0) is None
    assert exhaustive_candidate(space, 5) is None
    code = exhaustive_candidate(space, 6)
    assert code.labels == (((0,), (1,)), ((1,), (0,)))
    assert code.next_states == ((0, 1), (0, 1))


def test_exhaustive_search_ranks_full_rank_first():
    """Test the exhaustive ranking of the one-antenna two-state space."""
    ranked = search_codes(SearchSpace(**SMALL), N=1, max_len=4, top_k=None)
    assert [r.rank_position for r in ranked] == list(range(1, len(ranked) + 1))
    assert len(ranked) <= 6
    keys = [r.score.score_key() for r in ranked]
    assert keys == sorted(keys)
    best = ranked[0]
    assert best.code.labels == (((0,), (1,)), ((1,), (0,)))
    assert best.score.min_rank == 1
    assert best.score.criterion == "determinant"


def test_random_candidate_constraints():
    """Test random tables honour the row constraints and seeding."""
    space = SearchSpace(M=2, mode="random", budget=5)
    for index in range(20):
        code = random_candidate(space, 3, index)
        assert code.labels[0][0] == (0, 0)
        assert len(set(code.labels)) == code.num_states
        assert code.next_states == tuple(tuple(range(4)) for _ in range(4))
    assert random_candidate(space, 3, 7) == random_candidate(space, 3, 7)
    assert random_candidate(space, 3, 7) != random_candidate(space, 4, 7)


def test_random_search_is_deterministic():
    """Test that the ranking does not depend on the worker count."""
    space = SearchSpace(M=2, mode="random", budget=40)
    serial = search_codes(space, N=2, max_len=3, seed=11, top_k=5, workers=1)
    pooled = search_codes(space, N=2, max_len=3, seed=11, top_k=5, workers=2)
    assert [r.code for r in serial] == [r.code for r in pooled]
    assert [r.score.score_key() for r in serial] == [r.score.score_key() for r in pooled]
    assert len(serial) == 5


def test_listed_designed_code_wins_single_antenna(codes):
    """Test the designed M=2 code ranking first at N=1."""
    space = SearchSpace(
        M=2,
        mode="listed",
        candidates=(codes["qpsk4_m2_tarokh"], codes["qpsk4_m2_paper"]),
    )
    ranked = search_codes(space, N=1, max_len=4)
    assert ranked[0].code.name == "qpsk4_m2_paper"
    assert ranked[0].score.criterion == "log_eig"


def test_listed_duplicates_collapse(codes):
    """Test that relabelled copies collapse to one entry."""
    tarokh = codes["qpsk4_m2_tarokh"]
    space = SearchSpace(
        M=2, mode="listed", candidates=(tarokh, relabel_states(tarokh, [0, 2, 1, 3]))
    )
    assert len(search_codes(space, N=2, max_len=4)) == 1


def test_relabel_keeps_score(codes):
    """Test that state relabelling keeps score and signature."""
    code = codes["qpsk4_m2_paper"]
    moved = relabel_states(code, [3, 1, 0, 2])
    for N in (1, 2):
        a = score_code(code, N, 4).score_key()
        b = score_code(moved, N, 4).score_key()
        assert a == pytest.approx(b)
    assert spectrum_signature(code, 4) == spectrum_signature(moved, 4)


def test_compare_codes(codes):
    """Test the comparison result and report."""
    designed, tarokh = codes["qpsk4_m2_paper"], codes["qpsk4_m2_tarokh"]
    result = compare_codes(designed, tarokh, N=1, max_len=4)
    assert result.ordering == -1
    assert result.winner == "qpsk4_m2_paper"
    assert "criterion: log_eig" in result.report
    assert "qpsk4_m2_tarokh" in result.report

    flipped = compare_codes(tarokh, designed, N=1, max_len=4)
    assert flipped.ordering == 1
    assert flipped.winner == "qpsk4_m2_paper"


def test_compare_with_itself(codes):
    """Test that a code ties with itself."""
    code = codes["qpsk4_m2_tarokh"]
    result = compare_codes(code, code, N=2, max_len=4)
    assert result.ordering == 0
    assert result.winner == "tie"
    assert result.score_a.criterion == "determinant"


def test_compare_rejects_mixed_m(codes):
    """Test comparing codes of different M."""
    with pytest.raises(ValueError):
        compare_codes(codes["qpsk4_m2_paper"], codes["qpsk4_m4_paper"], N=1)


def test_code_hash(codes):
    """Test the short table identifier."""
    a = codes["qpsk4_m2_paper"]
    assert code_hash(a) == code_hash(relabel_states(a, [0, 1, 2, 3]))
    assert code_hash(a) != code_hash(codes["qpsk4_m2_tarokh"])
    assert len(code_hash(a)) == 10


def test_ranking_csv_and_catalogs(codes, temp_dir):
    """Test the ranking CSV and the catalog files."""
    space = SearchSpace(
        M=2,
        mode="listed",
        candidates=(codes["qpsk4_m2_tarokh"], codes["qpsk4_m2_paper"]),
    )
    ranked = search_codes(space, N=1, max_len=3)
    path = write_ranking_csv(ranked, os.path.join(temp_dir, "out", "rank.csv"))
    rows = read_csv(path)
    assert rows[0] == RANKING_HEADER
    assert len(rows) == len(ranked) + 1
    assert rows[1][0] == "1"
    assert rows[1][1] == ranked[0].code.name
    assert rows[1][4] == "log_eig"

    paths = write_catalogs(ranked, os.path.join(temp_dir, "codes"))
    assert os.path.basename(paths[0]).startswith("001_")
    assert load_catalog(paths[0]) == ranked[0].code


def test_random_names_use_hash(temp_dir):
    """Test that random codes are listed by hash."""
    ranked = search_codes(SearchSpace(M=2, mode="random", budget=3), N=2, max_len=3, top_k=1)
    path = write_ranking_csv(ranked, os.path.join(temp_dir, "rank.csv"))
    assert read_csv(path)[1][1] == code_hash(ranked[0].code)


def test_empty_space_raises():
    """Test a space with no error events."""
    # one state and one input: no path pair can diverge
    space = SearchSpace(M=1, num_states=1, num_inputs=1, mode="exhaustive")
    assert space.size == 1
    with pytest.raises(ValueError):
        search_codes(space, N=1, max_len=2)


class StopScoring(Exception):
    pass


def test_exhaustive_space_is_generated_lazily(monkeypatch):
    """Test that only the chunks actually scored are generated."""
    from .. import search

    space = SearchSpace(M=1, num_states=4, num_inputs=4, mode="exhaustive")
    assert space.size == 4**15
    seen = []

    def fake_chunk(space, N, max_len, seed, start, stop):
        seen.append((start, stop))
        if len(seen) == 3:
            raise StopScoring
        return []

    monkeypatch.setattr(search, "_score_chunk", fake_chunk)
    with pytest.raises(StopScoring):
        search_codes(space, N=1, max_len=2, workers=1)
    assert seen == [(0, 32), (32, 64), (64, 96)]


def test_pruned_ranking_matches_full_ranking():
    """Test that holding a few codes per signature keeps the exact top codes."""
    space = SearchSpace(M=2, mode="random", budget=200)
    full = search_codes(space, N=1, max_len=3, seed=4, top_k=None, workers=1)
    top = search_codes(space, N=1, max_len=3, seed=4, top_k=3, workers=1)
    assert [r.code for r in top] == [r.code for r in full[:3]]
    assert [r.rank_position for r in top] == [1, 2, 3]


@pytest.mark.slow
def test_random_search_beats_reference_code(codes):
    """Test that 10^4 random tables contain one scoring at least as well as Tarokh's."""
    space = SearchSpace(M=2, mode="random", budget=10_000)
    best = search_codes(space, N=1, max_len=3, seed=0, top_k=1)[0]
    reference = score_code(codes["qpsk4_m2_tarokh"], 1, max_len=3)
    assert best.score.score_key() <= reference.score_key()


def _brute_force_score(code, N, max_len):
    grouped = {}
    for omega, start, weight in brute_force_events(code, max_len):
        gram = omega @ omega.conj().T
        key = tuple(np.rint(np.concatenate([gram.real.ravel(), gram.imag.ravel()])).astype(int))
        if key in grouped:
            event = grouped[key]
            grouped[key] = DifferenceMatrix(
                omega=event.omega,
                event_length=event.event_length,
                weight=event.weight,
                start_state=event.start_state,
                multiplicity=event.multiplicity + weight,
                count=event.count + 1,
            )
        else:
            grouped[key] = DifferenceMatrix(
                omega=omega,
                event_length=omega.shape[1],
                weight=int(np.count_nonzero(np.any(np.abs(omega) > 1e-9, axis=0))),
                start_state=start,
                multiplicity=weight,
            )
    return score_code(code, N, max_len, events=list(grouped.values()))


@pytest.mark.slow
def test_compare_four_antenna_codes_against_brute_force(codes):
    """Test the M=4 comparison at N=2 against exhaustive path-pair enumeration."""
    designed, tarokh = codes["qpsk4_m4_paper"], codes["qpsk4_m4_tarokh"]
    result = compare_codes(designed, tarokh, N=2, max_len=3)
    assert result.ordering != 0
    assert result.score_a.criterion == "log_eig"

    key_a = _brute_force_score(designed, 2, 3).score_key()
    key_b = _brute_force_score(tarokh, 2, 3).score_key()
    assert key_a != key_b
    assert result.ordering == (1 if key_a > key_b else -1)
    assert result.score_a.min_rank == _brute_force_score(designed, 2, 3).min_rank
    assert result.winner in result.report

    default = compare_codes(designed, tarokh, N=2)
    assert "max_len=4" in default.report
    assert default.ordering != 0
