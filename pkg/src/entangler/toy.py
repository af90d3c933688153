"""Small synthetic datasets for smoke tests, overfit checks and benchmarks."""

from __future__ import annotations

import numpy as np

_PEOPLE = [["john"], ["mary"], ["ali", "khan"], ["ngozi"], ["li", "wei"], ["sam"], ["ana", "maria"], ["kofi"]]
_PLACES = [["paris"], ["new", "york"], ["lagos"], ["kampala"], ["rio"], ["san", "jose"], ["oslo"], ["dakar"]]
_ORGS = [["acme"], ["un"], ["red", "cross"], ["nasa"]]
_VERBS = ["visited", "left", "likes", "saw", "praised", "joined"]
_FILLER = ["today", "yesterday", "again", "quietly", "twice"]

_POSITIVE = ["good", "great", "lovely", "happy", "superb", "fine", "nice", "glad"]
_NEGATIVE = ["bad", "awful", "sad", "poor", "grim", "ugly", "rude", "dull"]
_NEUTRAL = ["the", "movie", "was", "food", "day", "service", "and", "very", "so", "show"]


def _entity(words, etype):
    return list(words), [f"B-{etype}"] + [f"I-{etype}"] * (len(words) - 1)


def ner_sentences(n: int = 16, seed: int = 0) -> list[tuple[list[str], list[str]]]:
    """BIO-tagged sentences built from PER/LOC/ORG templates."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        subj_w, subj_l = _entity(_PEOPLE[rng.integers(len(_PEOPLE))], "PER")
        if rng.random() < 0.6:
            obj_w, obj_l = _entity(_PLACES[rng.integers(len(_PLACES))], "LOC")
        else:
            obj_w, obj_l = _entity(_ORGS[rng.integers(len(_ORGS))], "ORG")
        verb = _VERBS[rng.integers(len(_VERBS))]
        words = subj_w + [verb] + obj_w
        labels = subj_l + ["O"] + obj_l
        if rng.random() < 0.5:
            words.append(_FILLER[rng.integers(len(_FILLER))])
            labels.append("O")
        out.append((words, labels))
    return out


def classification_examples(n: int = 32, seed: int = 0) -> list[tuple[list[str], str]]:
    """Two-class sentiment-like examples; the class is carried by polar words."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = "pos" if i % 2 == 0 else "neg"
        polar = _POSITIVE if label == "pos" else _NEGATIVE
        words = [_NEUTRAL[j] for j in rng.integers(len(_NEUTRAL), size=int(rng.integers(2, 5)))]
        for _ in range(int(rng.integers(1, 3))):
            words.insert(int(rng.integers(len(words) + 1)), polar[rng.integers(len(polar))])
        out.append((words, label))
    return out


def corpus_sentences(n: int = 50, seed: int = 0) -> list[list[str]]:
    rng = np.random.default_rng(seed)
    sents = []
    for _ in range(n):
        words, _ = ner_sentences(1, int(rng.integers(1 << 30)))[0]
        if rng.random() < 0.5:
            words = words + classification_examples(1, int(rng.integers(1 << 30)))[0][0]
        sents.append(words)
    return sents
