"""Entity-span F1, token accuracy, and macro F1."""

from __future__ import annotations

from collections import Counter
from typing import Sequence


def extract_spans(labels: Sequence[str]) -> set[tuple[str, int, int]]:
    """BIO entities as (type, start, end) with ``end`` exclusive.

    ``B-X`` opens an entity, ``I-X`` extends an open ``X`` entity, anything
    else closes it. An ``I-X`` that cannot extend is treated as ``B-X``.
    """
    spans = set()
    current_type = None
    start = 0
    for i, lab in enumerate(list(labels) + ["O"]):
        prefix, _, etype = lab.partition("-")
        continues = prefix == "I" and etype == current_type and current_type is not None
        if continues:
            continue
        if current_type is not None:
            spans.add((current_type, start, i))
            current_type = None
        if prefix in ("B", "I") and etype:
            current_type, start = etype, i
    return spans


def span_f1(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> tuple[float, float, float]:
    if len(pred) != len(gold):
        raise ValueError("prediction and gold sentence counts differ")
    tp = n_pred = n_gold = 0
    for p, g in zip(pred, gold):
        if len(p) != len(g):
            raise ValueError("prediction and gold sentence lengths differ")
        ps, gs = extract_spans(p), extract_spans(g)
        tp += len(ps & gs)
        n_pred += len(ps)
        n_gold += len(gs)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def token_accuracy(pred: Sequence[Sequence], gold: Sequence[Sequence]) -> float:
    total = correct = 0
    for p, g in zip(pred, gold, strict=True):
        for a, b in zip(p, g, strict=True):
            total += 1
            correct += a == b
    return correct / total if total else 0.0


def accuracy(pred: Sequence, gold: Sequence) -> float:
    pairs = list(zip(pred, gold, strict=True))
    return sum(a == b for a, b in pairs) / len(pairs) if pairs else 0.0


def macro_f1(pred: Sequence, gold: Sequence, labels: Sequence | None = None) -> float:
    """Unweighted mean of per-class F1 over ``labels`` (default: every class seen)."""
    pairs = list(zip(pred, gold, strict=True))
    classes = list(labels) if labels is not None else sorted({x for pair in pairs for x in pair}, key=str)
    if not classes:
        return 0.0
    tp, fp, fn = Counter(), Counter(), Counter()
    for p, g in pairs:
        if p == g:
            tp[p] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    scores = []
    for c in classes:
        denom = 2 * tp[c] + fp[c] + fn[c]
        scores.append(2 * tp[c] / denom if denom else 0.0)
    return sum(scores) / len(scores)
