"""Evaluation metrics: support-weighted AUC / F1 / precision for the
sentiment task, median rank and recall@k for retrieval."""

import numpy as np

from .errors import ContractError, EmptyInputError


def _rank_with_midranks(scores):
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        # tie group [i, j] shares the average of its 1-based positions
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def binary_auc(y_true, scores) -> float:
    """Rank-statistic AUC with midrank tie handling."""
    y = np.asarray(y_true, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ContractError("labels and scores must be equal-length vectors")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUC undefined: only one class present")
    ranks = _rank_with_midranks(s)
    rank_sum = ranks[y == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def weighted_auc(y_true, scores) -> float:
    """One-vs-rest AUC per class, averaged with class-support weights."""
    y = np.asarray(y_true, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    auc1 = binary_auc(y, s)
    auc0 = binary_auc(1.0 - y, -s)
    n = y.size
    n1 = (y == 1).sum()
    return float((n1 * auc1 + (n - n1) * auc0) / n)


def _per_class_prf(y_true, y_pred, cls):
    tp = int(((y_pred == cls) & (y_true == cls)).sum())
    fp = int(((y_pred == cls) & (y_true != cls)).sum())
    fn = int(((y_pred != cls) & (y_true == cls)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) \
        if precision + recall else 0.0
    return precision, f1


def metrics_sentiment(y_true, scores, threshold=0.5):
    """Returns dict with weighted auc / f1 / precision.

    AUC is None when only one class is present; F1 and precision are
    still reported in that case.
    """
    y = np.asarray(y_true, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    if y.size == 0:
        raise EmptyInputError("metrics on an empty label set")
    try:
        auc = weighted_auc(y, s)
    except ContractError:
        auc = None
    pred = (s >= threshold).astype(np.float64)
    f1_sum = 0.0
    prec_sum = 0.0
    for cls in (0.0, 1.0):
        support = int((y == cls).sum())
        if support == 0:
            continue
        precision, f1 = _per_class_prf(y, pred, cls)
        f1_sum += support * f1
        prec_sum += support * precision
    return {
        "auc": auc,
        "f1": f1_sum / y.size,
        "precision": prec_sum / y.size,
    }


def metrics_retrieval(ranks, ks=(1, 5, 10)):
    """Median rank (mean of middle two for even counts) and recall@k."""
    r = sorted(ranks)
    if not r:
        raise EmptyInputError("no ranks to evaluate")
    if any(one < 1 for one in r):
        raise ContractError("ranks are 1-based")
    n = len(r)
    if n % 2:
        med = float(r[n // 2])
    else:
        med = 0.5 * (r[n // 2 - 1] + r[n // 2])
    out = {"med_r": med}
    for k in ks:
        out["r_at_%d" % k] = sum(1 for one in r if one <= k) / n
    return out


def rank_of_truth(scores, truth_index: int) -> int:
    """1-based rank under descending score, ties broken by lower index."""
    s = np.asarray(scores, dtype=np.float64)
    if not (0 <= truth_index < s.size):
        raise ContractError("truth index %d outside candidate set" % truth_index)
    better = (s > s[truth_index]).sum()
    tied_before = (s[:truth_index] == s[truth_index]).sum()
    return int(better + tied_before + 1)
