import pytest

from kdlab.experiments import (bayes_direction, interpolation_overlap, multimode_complexity,
                               multimode_datasets, reborn_traces, strategy_complexity, stream)
from kdlab.hmmlab import dataset_complexity


def test_stream_named_and_indexed():
    assert stream(1, "a", 0) == stream(1, "a", 0)
    assert len({stream(1, "a", 0), stream(1, "b", 0), stream(1, "a", 1), stream(2, "a", 0)}) == 4


def test_bayes_direction_small():
    rep = bayes_direction(seeds=3, n_test=200)
    assert len(rep.rows) == 3
    assert 0 <= rep.summary["tok_wins_tacc"] <= 3
    assert rep.to_dict() == bayes_direction(seeds=3, n_test=200, threads=3).to_dict()


def test_multimode_structure():
    ds = multimode_datasets(0, K=3, V=20, N=100)
    full, rand, dist = ds["full"], ds["random-select"], ds["distilled"]
    assert len(full) == 300 and len(rand) == len(dist) == 100
    assert full.K == rand.K == dist.K == 9
    base = {s.x for s in rand.seqs}
    assert {s.x for s in full.seqs} == base and dist.xs == rand.xs
    # each mode uses its own label block
    for j in range(3):
        block = full.seqs[j * 100:(j + 1) * 100]
        assert all(j * 3 <= v < (j + 1) * 3 for s in block for v in s.y)


def test_multimode_ordering_small():
    rep = multimode_complexity(seeds=3, N=500)
    for _, d, r, f in rep.rows:
        assert d < r < f
    assert rep.summary["ordered"] == 3


def test_strategy_complexity_small():
    rep = strategy_complexity(seeds=2, K=6, V=20, N=300)
    assert rep.columns == ["seed", "beam:5", "greedy", "topk:6", "sample"]
    for row in rep.rows:
        assert row[1] <= row[4]


def test_reborn_trace_shape():
    rep = reborn_traces(seeds=2, iters=3, N=200)
    assert rep.columns == ["seed", "C0", "C1", "C2", "C3"]
    assert len(rep.summary["median_trace"]) == 4


def test_interpolation_not_worse():
    rep = interpolation_overlap(seeds=3, n=200)
    assert rep.summary["not_worse"] == 3


def test_drivers_deterministic():
    a = reborn_traces(seeds=2, iters=2, N=100, threads=2)
    b = reborn_traces(seeds=2, iters=2, N=100)
    assert a.rows == b.rows


def test_distilled_dataset_complexity_smaller():
    ds = multimode_datasets(1, K=3, V=20, N=300)
    assert dataset_complexity(ds["distilled"]) < dataset_complexity(ds["full"])
