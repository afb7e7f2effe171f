"""Metric implementations against brute-force oracles."""

import numpy as np
import pytest

from jtav.errors import ContractError, EmptyInputError
from jtav.metrics import (binary_auc, metrics_retrieval, metrics_sentiment,
                          rank_of_truth, weighted_auc)


def brute_auc(y, s):
    """P(score_pos > score_neg) + 0.5 P(equal), by pair enumeration."""
    pos = [si for yi, si in zip(y, s) if yi == 1]
    neg = [si for yi, si in zip(y, s) if yi == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_auc_four_point_hand_case():
    y = [0, 0, 1, 1]
    s = [0.1, 0.6, 0.4, 0.9]
    assert abs(binary_auc(y, s) - 0.75) < 1e-12


def test_auc_perfect_and_inverted():
    y = [0, 0, 1, 1]
    assert binary_auc(y, [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert binary_auc(y, [0.9, 0.8, 0.2, 0.1]) == 0.0


def test_auc_all_tied_is_half():
    assert abs(binary_auc([0, 1, 0, 1], [0.5] * 4) - 0.5) < 1e-12


def test_auc_matches_pair_enumeration():
    rng = np.random.default_rng(0)
    for trial in range(30):
        n = int(rng.integers(4, 25))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            continue
        # quantized scores force plenty of ties
        s = np.round(rng.random(n), 1)
        assert abs(binary_auc(y, s) - brute_auc(y, s)) < 1e-12, \
            "trial %d" % trial


def test_auc_single_class_raises():
    with pytest.raises(ContractError):
        binary_auc([1, 1, 1], [0.1, 0.2, 0.3])


def test_weighted_auc_complement_symmetry():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 40)
    s = rng.random(40)
    a = weighted_auc(y, s)
    b = weighted_auc(1 - y, -s)
    assert abs(a - b) < 1e-12


def test_sentiment_metrics_hand_case():
    y = [1, 1, 0, 0]
    s = [0.9, 0.2, 0.8, 0.1]
    m = metrics_sentiment(y, s)
    # per class: pos tp=1 fp=1 fn=1 -> p=0.5 f1=0.5; neg tp=1 fp=1 fn=1 same
    assert abs(m["precision"] - 0.5) < 1e-12
    assert abs(m["f1"] - 0.5) < 1e-12
    # pairs: (.9,.8) (.9,.1) (.2,.1) ordered, (.2,.8) not -> 3/4
    assert abs(m["auc"] - 0.75) < 1e-12


def test_sentiment_metrics_single_class_auc_none():
    m = metrics_sentiment([1, 1], [0.9, 0.8])
    assert m["auc"] is None
    assert m["f1"] == 1.0


def test_sentiment_metrics_empty_raises():
    with pytest.raises(EmptyInputError):
        metrics_sentiment([], [])


def test_retrieval_metrics_hand_case():
    m = metrics_retrieval([1, 2, 3, 10])
    assert m["med_r"] == 2.5
    assert m["r_at_1"] == 0.25
    assert m["r_at_5"] == 0.75
    assert m["r_at_10"] == 1.0


def test_retrieval_metrics_match_bruteforce():
    rng = np.random.default_rng(2)
    for trial in range(100):
        n = int(rng.integers(1, 30))
        ranks = rng.integers(1, 50, n).tolist()
        m = metrics_retrieval(ranks)
        srt = sorted(ranks)
        med = (float(srt[n // 2]) if n % 2
               else 0.5 * (srt[n // 2 - 1] + srt[n // 2]))
        assert m["med_r"] == med, "trial %d" % trial
        for k in (1, 5, 10):
            frac = sum(1 for r in ranks if r <= k) / n
            assert abs(m["r_at_%d" % k] - frac) < 1e-12


def test_retrieval_metrics_rejects_zero_rank():
    with pytest.raises(ContractError):
        metrics_retrieval([0, 1])


def test_rank_of_truth_basic():
    assert rank_of_truth([0.1, 0.9, 0.5], 1) == 1
    assert rank_of_truth([0.1, 0.9, 0.5], 2) == 2
    assert rank_of_truth([0.1, 0.9, 0.5], 0) == 3


def test_rank_of_truth_tie_order():
    # equal scores: earlier candidates outrank later ones
    s = [0.5, 0.5, 0.5]
    assert rank_of_truth(s, 0) == 1
    assert rank_of_truth(s, 1) == 2
    assert rank_of_truth(s, 2) == 3


def test_rank_of_truth_matches_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 20))
        s = np.round(rng.random(n), 1)
        t = int(rng.integers(0, n))
        order = sorted(range(n), key=lambda i: (-s[i], i))
        assert rank_of_truth(s, t) == order.index(t) + 1


def test_rank_of_truth_bad_index():
    with pytest.raises(ContractError):
        rank_of_truth([0.5, 0.6], 2)
