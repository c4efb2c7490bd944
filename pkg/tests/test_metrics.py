import logging

import numpy as np
import pandas as pd
import scipy.sparse as sp

import pytest
from pytest import approx, fixture, mark

from mrfrec import (
    DataError,
    EvalSplit,
    PreprocessStats,
    RankedList,
    WeightMatrix,
    evaluate,
    format_report,
    ndcg_at_k,
    recall_at_k,
    split_strong_generalization,
    top_n,
    write_report,
)
from mrfrec.testkit import SyntheticSpec, make_block_diagonal

_log = logging.getLogger(__name__)


def _ranked(items):
    return RankedList(items=np.asarray(items), scores=-np.arange(len(items), dtype=float))


def test_recall_normalized_by_min():
    assert recall_at_k(_ranked([0, 1, 5]), {0, 1, 2}, 2) == approx(1.0)


def test_recall_no_overlap():
    assert recall_at_k(_ranked([3, 4]), {0, 1}, 2) == 0.0


def test_recall_single_relevant_deep():
    assert recall_at_k(_ranked([9, 8, 7, 6, 0, 5]), {0}, 20) == approx(1.0)


def test_ndcg_perfect():
    assert ndcg_at_k(_ranked([2, 0, 1, 5]), {0, 1, 2}, 3) == approx(1.0)


def test_ndcg_rank_two():
    assert ndcg_at_k(_ranked([4, 0, 5]), {0}, 2) == approx(np.log(2) / np.log(3), abs=1e-12)
    assert ndcg_at_k(_ranked([4, 0, 5]), {0}, 10) == approx(np.log(2) / np.log(3), abs=1e-12)


def test_ndcg_miss():
    assert ndcg_at_k(_ranked([4, 5, 0]), {0}, 2) == 0.0


def test_empty_relevant():
    with pytest.raises(DataError):
        ndcg_at_k(_ranked([1]), set(), 1)
    with pytest.raises(DataError):
        recall_at_k(_ranked([1]), [], 1)


def test_three_user_fixture():
    lists = [[0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2]]
    relevant = [{0, 2}, {0}, {3, 2, 1}]
    d = 1 / np.log2(3)
    # user 1: hit at 1 only; user 2: none in top 2; user 3: hits at 1 and 2
    expected_ndcg = [1 / (1 + d), 0.0, 1.0]
    expected_recall = [0.5, 0.0, 1.0]
    for items, rel, nd, rc in zip(lists, relevant, expected_ndcg, expected_recall):
        assert ndcg_at_k(_ranked(items), rel, 2) == approx(nd, abs=1e-12)
        assert recall_at_k(_ranked(items), rel, 2) == approx(rc, abs=1e-12)


@fixture(scope="module")
def blocks():
    "Every user holds every item of one 4-item block."
    return make_block_diagonal(SyntheticSpec(n_users=40, n_items=12, density=1.0, blocks=[4, 4, 4], seed=8))


def _block_weights(mat):
    block = np.arange(12) // 4
    B = (block[:, None] == block[None, :]).astype(float)
    np.fill_diagonal(B, 0.0)
    return WeightMatrix(B=B, item_ids=mat.item_index, solver="dense", lam=1.0, alpha=0.0, center=False)


def test_oracle_weights_score_perfectly(blocks):
    split = split_strong_generalization(blocks, seed=3, fold_in_frac=0.5)
    report = evaluate(_block_weights(blocks), split, blocks, PreprocessStats.identity(12), ks=[2, 5])
    for row in report.rows:
        assert row.mean == approx(1.0)
        assert row.n_users == len(split.test_users)
    assert report.config["partition"] == "test"
    assert report.config["seed"] == 3


def test_validation_partition(blocks):
    split = split_strong_generalization(blocks, seed=3, fold_in_frac=0.5)
    report = evaluate(_block_weights(blocks), split, blocks, PreprocessStats.identity(12), ks=[2], partition="validation")
    assert report.n_users == len(split.validation_users)


def test_zero_weights_follow_index_order(blocks):
    split = split_strong_generalization(blocks, seed=4)
    zero = WeightMatrix(B=np.zeros((12, 12)), item_ids=blocks.item_index, solver="dense", lam=1.0, alpha=0.0, center=False)
    report = evaluate(zero, split, blocks, PreprocessStats.identity(12), ks=[3])

    expected = []
    for user in split.test_users:
        ranked = top_n(np.zeros(12), exclude=split.fold_in[user], n=3)
        assert ranked.items.tolist() == sorted(set(range(12)) - set(split.fold_in[user]))[:3]
        expected.append(ndcg_at_k(ranked, split.held_out[user], 3))
    assert report.get("ndcg", 3).mean == approx(np.mean(expected))
    again = evaluate(zero, split, blocks, PreprocessStats.identity(12), ks=[3])
    assert again.rows == report.rows


def test_stderr(blocks):
    split = split_strong_generalization(blocks, seed=4)
    zero = WeightMatrix(B=np.zeros((12, 12)), item_ids=blocks.item_index, solver="dense", lam=1.0, alpha=0.0, center=False)
    report = evaluate(zero, split, blocks, PreprocessStats.identity(12), ks=[3])
    values = []
    for user in split.test_users:
        ranked = top_n(np.zeros(12), exclude=split.fold_in[user], n=3)
        values.append(recall_at_k(ranked, split.held_out[user], 3))
    row = report.get("recall", 3)
    assert row.stderr == approx(np.std(values, ddof=1) / np.sqrt(len(values)))


def test_disjoint_items(blocks):
    split = split_strong_generalization(blocks, seed=3)
    other = WeightMatrix(
        B=np.zeros((2, 2)), item_ids=pd.Index(["zz1", "zz2"]), solver="dense", lam=1.0, alpha=0.0, center=False
    )
    with pytest.raises(DataError, match="share no items"):
        evaluate(other, split, blocks, PreprocessStats.identity(2))


def test_unknown_items_ignored(blocks, caplog):
    # pick a split whose test users cover the unknown block and a known one
    for seed in range(100):
        split = split_strong_generalization(blocks, seed=seed, fold_in_frac=0.5)
        user_blocks = [int(split.fold_in[u][0]) // 4 for u in split.test_users]
        if 2 in user_blocks and min(user_blocks) < 2:
            break
    known_users = sum(1 for b in user_blocks if b < 2)
    keep = blocks.item_index[:8]
    block = np.arange(8) // 4
    B = (block[:, None] == block[None, :]).astype(float)
    np.fill_diagonal(B, 0.0)
    partial = WeightMatrix(B=B, item_ids=keep, solver="dense", lam=1.0, alpha=0.0, center=False)
    with caplog.at_level(logging.WARNING):
        report = evaluate(partial, split, blocks, PreprocessStats.identity(8), ks=[2])
    assert "unknown to the model" in caplog.text
    assert report.get("recall", 2).mean == approx(1.0)
    assert report.n_users == known_users


def test_empty_held_out(blocks):
    split = split_strong_generalization(blocks, seed=3)
    user = int(split.test_users[0])
    held = dict(split.held_out)
    held[user] = np.array([], dtype=np.int64)
    broken = EvalSplit(split.train_users, split.validation_users, split.test_users, split.fold_in, held, split.seed)
    with pytest.raises(DataError):
        evaluate(_block_weights(blocks), broken, blocks, PreprocessStats.identity(12))


def test_write_report_stable(blocks, tmp_path):
    split = split_strong_generalization(blocks, seed=3, fold_in_frac=0.5)
    report = evaluate(_block_weights(blocks), split, blocks, PreprocessStats.identity(12), ks=[5, 2])
    write_report(report, tmp_path / "a.csv")
    write_report(report, tmp_path / "b.csv")
    text = (tmp_path / "a.csv").read_text()
    assert text == (tmp_path / "b.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "metric,k,mean,stderr,n_users"
    assert lines[1].startswith("ndcg,2,1.0000000000,")
    assert [line.split(",")[0] for line in lines[1:]] == ["ndcg", "ndcg", "recall", "recall"]
    assert "ndcg@2" in format_report(report)


def test_metrics_non_decreasing_past_relevant_count():
    rng = np.random.default_rng(17)
    for _ in range(50):
        items = rng.permutation(30)
        relevant = set(rng.choice(30, size=int(rng.integers(1, 8)), replace=False).tolist())
        ranked = _ranked(items)
        for metric in (recall_at_k, ndcg_at_k):
            values = [metric(ranked, relevant, k) for k in range(len(relevant), 31)]
            assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))


def test_metrics_can_drop_below_relevant_count():
    # the min(k, |relevant|) normalizer still grows while k < |relevant|
    ranked = _ranked([0, 9])
    assert recall_at_k(ranked, {0, 1}, 1) == 1.0
    assert recall_at_k(ranked, {0, 1}, 2) == approx(0.5)
    assert ndcg_at_k(ranked, {0, 1}, 2) < ndcg_at_k(ranked, {0, 1}, 1)


def test_metrics_invariant_to_item_relabeling():
    rng = np.random.default_rng(5)
    perm = rng.permutation(40)
    for _ in range(20):
        items = rng.permutation(40)[:15]
        relevant = set(rng.choice(40, size=4, replace=False).tolist())
        moved = {int(perm[i]) for i in relevant}
        for k in (1, 5, 15):
            assert recall_at_k(_ranked(perm[items]), moved, k) == recall_at_k(_ranked(items), relevant, k)
            assert ndcg_at_k(_ranked(perm[items]), moved, k) == ndcg_at_k(_ranked(items), relevant, k)


def test_evaluate_invariant_to_model_item_order(blocks):
    split = split_strong_generalization(blocks, seed=3, fold_in_frac=0.5)
    rng = np.random.default_rng(9)
    B = rng.random((12, 12))
    np.fill_diagonal(B, 0.0)
    base = WeightMatrix(B=B, item_ids=blocks.item_index, solver="dense", lam=1.0, alpha=0.0, center=False)
    p = rng.permutation(12)
    shuffled = WeightMatrix(
        B=B[np.ix_(p, p)], item_ids=blocks.item_index[p], solver="dense", lam=1.0, alpha=0.0, center=False
    )
    stats = PreprocessStats.identity(12)
    a = evaluate(base, split, blocks, stats, ks=[2, 5])
    b = evaluate(shuffled, split, blocks, stats, ks=[2, 5])
    for left, right in zip(a.rows, b.rows):
        assert (left.metric, left.k) == (right.metric, right.k)
        assert left.mean == approx(right.mean, abs=1e-12)
