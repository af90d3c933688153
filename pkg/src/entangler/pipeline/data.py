"""Readers and writers for the on-disk dataset formats.

* CoNLL: whitespace-separated columns, first = token, last = label; a
  blank line ends a sentence; ``-DOCSTART-`` lines are skipped.
* Classification: ``label<TAB>text`` per line.
* Pretraining corpus: one sentence per line, blank lines ignored.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import ParseError


def load_conll(path) -> list[tuple[list[str], list[str]]]:
    sentences = []
    words: list[str] = []
    labels: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if line.startswith("-DOCSTART-"):
                continue
            if not line:
                if words:
                    sentences.append((words, labels))
                    words, labels = [], []
                continue
            cols = line.split()
            if len(cols) < 2:
                raise ParseError("missing label column", str(path), lineno)
            words.append(cols[0])
            labels.append(cols[-1])
    if words:
        sentences.append((words, labels))
    return sentences


def write_conll(path, sentences) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for words, labels in sentences:
            for w, lab in zip(words, labels):
                fh.write(f"{w} {lab}\n")
            fh.write("\n")


def load_classification(path) -> list[tuple[list[str], str]]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError("expected 'label<TAB>text'", str(path), lineno)
            label, text = line.split("\t", 1)
            words = text.split()
            if not words:
                raise ParseError("empty text", str(path), lineno)
            examples.append((words, label.strip()))
    return examples


def write_classification(path, examples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for words, label in examples:
            fh.write(f"{label}\t{' '.join(words)}\n")


def load_corpus(path) -> list[list[str]]:
    text = Path(path).read_text(encoding="utf-8")
    return [line.split() for line in text.split("\n") if line.strip()]


def load_task_data(task: str, path):
    """(word lists, label payloads) for a task; pretraining has no labels."""
    if task in ("ner", "pos"):
        data = load_conll(path)
    elif task == "classify":
        data = load_classification(path)
    elif task == "pretrain":
        return [(words, None) for words in load_corpus(path)]
    else:
        raise ValueError(f"unknown task {task!r}")
    return data
