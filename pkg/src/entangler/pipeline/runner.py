"""Training, evaluation, prediction and pretraining runs."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import tensor as T
from ..batch import Batch, collate
from ..errors import ConfigurationError, InputError, TrainingError
from ..heads import (
    ClassificationHead,
    LabelingHead,
    class_log_probs,
    classification_loss,
    labeling_loss,
    word_log_probs,
)
from ..model import EntanglementModel, ModelConfig
from ..nn import Module
from ..pretrain import Pretrainer
from ..tensor.checkpoint import load_checkpoint, save_checkpoint
from ..tokenize import TokenizedPair, Vocab, build_vocabs, tokenize_pair
from . import metrics as M
from .config import RunConfig, load_config, parse_config_text
from .data import load_task_data

log = logging.getLogger(__name__)

SUBWORD_VOCAB = "subword.vocab"
CHAR_VOCAB = "char.vocab"
LABELS = "labels.txt"
CONFIG = "config.txt"
REPORT = "report.json"

PRIMARY_METRIC = {"ner": "f1", "pos": "accuracy", "classify": "macro_f1"}


class TaskModel(Module):
    """Entanglement model with one task head read from one side."""

    def __init__(self, model: EntanglementModel, head: Module, task: str, side: str):
        self.model = model
        self.head = head
        self.task = task
        self.side = side

    def log_probs(self, batch: Batch) -> T.Tensor:
        states = self.model(batch)
        if self.task == "classify":
            return class_log_probs(states, self.side, self.head)
        return word_log_probs(states, self.side, batch, self.head)

    def loss(self, batch: Batch) -> T.Tensor:
        lp = self.log_probs(batch)
        if self.task == "classify":
            return classification_loss(lp, batch.seq_labels)
        return labeling_loss(lp, batch.word_labels, batch.word_mask)

    def predict(self, batch: Batch) -> list:
        """Label ids: one list per example (labeling) or one id per example."""
        with T.no_grad():
            lp = self.log_probs(batch).data
        ids = np.argmax(lp, axis=-1)
        if self.task == "classify":
            return [int(i) for i in ids]
        return [[int(x) for x in ids[b, : p.num_words]] for b, p in enumerate(batch.pairs)]


def _seed_streams(seed: int, n: int = 3) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def model_config(cfg: RunConfig, subword_vocab: Vocab, char_vocab: Vocab) -> ModelConfig:
    return ModelConfig(
        subword_vocab_size=len(subword_vocab),
        char_vocab_size=len(char_vocab),
        hidden_size=cfg.hidden_size,
        num_layers=cfg.num_layers,
        num_heads=cfg.num_heads,
        feed_forward_size=cfg.feed_forward_size,
        num_coattention=cfg.num_coattention,
        pe_strategy=cfg.pe_strategy,
        dropout=cfg.dropout,
        max_subwords=cfg.max_subwords,
        max_chars=cfg.max_chars,
    )


def build_task_model(cfg: RunConfig, subword_vocab: Vocab, char_vocab: Vocab, num_labels: int, rng) -> TaskModel:
    model = EntanglementModel(model_config(cfg, subword_vocab, char_vocab), rng)
    head_cls = ClassificationHead if cfg.task == "classify" else LabelingHead
    return TaskModel(model, head_cls(cfg.hidden_size, num_labels, rng), cfg.task, cfg.side)


@dataclass
class Encoded:
    pairs: list[TokenizedPair]
    labels: list  # per example: list of label ids, a single id, or None
    gold: list  # label strings, truncated alongside the words


def encode_examples(examples, subword_vocab, char_vocab, cfg: RunConfig, label_index=None, task=None) -> Encoded:
    task = task or cfg.task
    out = Encoded([], [], [])
    for words, labels in examples:
        pair = tokenize_pair(words, subword_vocab, char_vocab, cfg.max_subwords, cfg.max_chars)
        out.pairs.append(pair)
        if labels is None or label_index is None:
            out.labels.append(None)
            out.gold.append(labels)
            continue
        if task == "classify":
            gold = labels
            ids = _label_id(label_index, labels)
        else:
            gold = list(labels)[: pair.num_words]
            ids = [_label_id(label_index, lab) for lab in gold]
        out.labels.append(ids)
        out.gold.append(gold)
    return out


def _label_id(index: dict, label: str) -> int:
    try:
        return index[label]
    except KeyError:
        raise ConfigurationError(f"label {label!r} is not in the model's label set") from None


def make_batch(encoded: Encoded, idx: Sequence[int], task: str) -> Batch:
    pairs = [encoded.pairs[i] for i in idx]
    labels = [encoded.labels[i] for i in idx]
    if any(lab is None for lab in labels):
        return collate(pairs)
    if task == "classify":
        return collate(pairs, seq_labels=labels)
    return collate(pairs, word_labels=labels)


def compute_metrics(task: str, pred: list, gold: list) -> dict:
    if task == "ner":
        p, r, f = M.span_f1(pred, gold)
        return {"precision": p, "recall": r, "f1": f, "accuracy": M.token_accuracy(pred, gold)}
    if task == "pos":
        return {"accuracy": M.token_accuracy(pred, gold)}
    return {"macro_f1": M.macro_f1(pred, gold), "accuracy": M.accuracy(pred, gold)}


def predict_encoded(task_model: TaskModel, encoded: Encoded, label_names: list[str], batch_size: int) -> list:
    was_training = task_model.training
    task_model.eval()
    preds: list = []
    try:
        for start in range(0, len(encoded.pairs), batch_size):
            idx = range(start, min(start + batch_size, len(encoded.pairs)))
            batch = collate([encoded.pairs[i] for i in idx])
            for ids in task_model.predict(batch):
                preds.append(label_names[ids] if isinstance(ids, int) else [label_names[i] for i in ids])
    finally:
        task_model.train(was_training)
    return preds


def evaluate_encoded(task_model: TaskModel, encoded: Encoded, label_names, batch_size: int) -> dict:
    preds = predict_encoded(task_model, encoded, label_names, batch_size)
    return compute_metrics(task_model.task, preds, encoded.gold)


# -- vocabularies and run directories ------------------------------------
def resolve_vocabs(cfg: RunConfig, train_words: list[list[str]]) -> tuple[Vocab, Vocab]:
    if cfg.init_checkpoint:
        base = Path(cfg.init_checkpoint)
        return Vocab.load(base / SUBWORD_VOCAB), Vocab.load(base / CHAR_VOCAB)
    if cfg.subword_vocab and cfg.char_vocab and Path(cfg.subword_vocab).exists() and Path(cfg.char_vocab).exists():
        return Vocab.load(cfg.subword_vocab), Vocab.load(cfg.char_vocab)
    return build_vocabs(train_words, cfg.num_merges)


def save_run(directory, cfg: RunConfig, module: Module, subword_vocab, char_vocab, labels, optimizer=None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_checkpoint(directory, module.state_dict(), optimizer)
    subword_vocab.save(directory / SUBWORD_VOCAB)
    char_vocab.save(directory / CHAR_VOCAB)
    (directory / LABELS).write_text("".join(f"{lab}\n" for lab in labels), encoding="utf-8")
    (directory / CONFIG).write_text(cfg.to_text(), encoding="utf-8")


@dataclass
class Run:
    cfg: RunConfig
    subword_vocab: Vocab
    char_vocab: Vocab
    labels: list[str]
    task_model: TaskModel


def load_run(directory) -> Run:
    directory = Path(directory)
    if not (directory / CONFIG).exists():
        raise ConfigurationError(f"{directory} is not a checkpoint directory")
    values = parse_config_text((directory / CONFIG).read_text(encoding="utf-8"), str(directory / CONFIG))
    cfg = RunConfig(**values)
    if cfg.task == "pretrain":
        raise ConfigurationError("pretraining checkpoints have no task head; fine-tune with init_checkpoint")
    sv = Vocab.load(directory / SUBWORD_VOCAB)
    cv = Vocab.load(directory / CHAR_VOCAB)
    labels = [line for line in (directory / LABELS).read_text(encoding="utf-8").split("\n") if line]
    task_model = build_task_model(cfg, sv, cv, len(labels), np.random.default_rng(0))
    params, _ = load_checkpoint(directory)
    task_model.load_state_dict(params)
    task_model.eval()
    return Run(cfg, sv, cv, labels, task_model)


def _label_set(task: str, *datasets) -> list[str]:
    seen = set()
    for data in datasets:
        for _, labels in data:
            if task == "classify":
                seen.add(labels)
            else:
                seen.update(labels)
    return sorted(seen)


def _dump_nan(directory: Path, step: int, epoch: int, loss: float, module: Module, lr: float) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    state = {
        "step": step,
        "epoch": epoch,
        "loss": repr(loss),
        "lr": lr,
        "parameters": {
            name: {
                "finite": bool(np.isfinite(p.data).all()),
                "norm": float(np.linalg.norm(p.data)),
                "grad_finite": None if p.grad is None else bool(np.isfinite(p.grad).all()),
            }
            for name, p in module.named_parameters()
        },
    }
    path = directory / "nan_dump.json"
    path.write_text(json.dumps(state, indent=2, sort_keys=True), encoding="utf-8")
    return path


@dataclass
class TrainResult:
    report: dict
    checkpoint_dir: Path
    task_model: TaskModel | None = None
    history: list = field(default_factory=list)


def train(cfg: RunConfig, target_metric: float | None = None, callback: Callable | None = None) -> TrainResult:
    """Fine-tune on ``cfg.train_file``, selecting the best dev checkpoint.

    Dev is evaluated every ``eval_every`` steps (default: once per epoch).
    With ``target_metric`` set, training stops as soon as the dev primary
    metric reaches it.
    """
    if cfg.task == "pretrain":
        raise ConfigurationError("use pretrain() for task=pretrain")
    if not cfg.train_file:
        raise ConfigurationError("train_file is required")
    train_data = load_task_data(cfg.task, cfg.train_file)
    if not train_data:
        raise InputError(f"{cfg.train_file} contains no examples")
    dev_data = load_task_data(cfg.task, cfg.dev_file) if cfg.dev_file else None
    test_data = load_task_data(cfg.task, cfg.test_file) if cfg.test_file else None
    if dev_data is None:
        log.warning("no dev_file; selecting the checkpoint on the training data")
        dev_data = train_data

    sv, cv = resolve_vocabs(cfg, [w for w, _ in train_data])
    label_names = _label_set(cfg.task, train_data, dev_data, test_data or [])
    label_index = {lab: i for i, lab in enumerate(label_names)}
    if len(label_names) < 2:
        raise InputError("training data needs at least two distinct labels")

    init_rng, shuffle_rng, _ = _seed_streams(cfg.seed)
    with T.precision(np.float32):
        task_model = build_task_model(cfg, sv, cv, len(label_names), init_rng)
    if cfg.init_checkpoint:
        params, _ = load_checkpoint(cfg.init_checkpoint)
        task_model.model.load_state_dict(
            {k[len("model."):]: v for k, v in params.items() if k.startswith("model.")}, strict=True
        )
    enc_train = encode_examples(train_data, sv, cv, cfg, label_index)
    enc_dev = encode_examples(dev_data, sv, cv, cfg, label_index)

    n = len(enc_train.pairs)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.num_epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    eval_every = cfg.eval_every or steps_per_epoch
    opt = T.Adam(task_model.parameters(), lr=cfg.lr, total_steps=total_steps,
                 warmup_steps=cfg.warmup_steps, max_grad_norm=cfg.max_grad_norm)
    primary = PRIMARY_METRIC[cfg.task]
    ckpt = Path(cfg.checkpoint_dir)

    best = {"metric": -math.inf, "step": 0, "epoch": 0, "dev": None}
    history = []
    step = 0
    epoch = 0
    done = False
    task_model.train()
    while not done:
        epoch += 1
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = make_batch(enc_train, order[start : start + cfg.batch_size], cfg.task)
            loss = task_model.loss(batch)
            value = float(loss.data)
            if not math.isfinite(value):
                path = _dump_nan(ckpt, step, epoch, value, task_model, opt.current_lr())
                raise TrainingError(f"non-finite loss {value} at step {step}; state dumped to {path}")
            loss.backward()
            opt.step()
            opt.zero_grad()
            step += 1
            if step % eval_every == 0 or step == total_steps:
                dev = evaluate_encoded(task_model, enc_dev, label_names, cfg.batch_size)
                entry = {"step": step, "epoch": epoch, "loss": value, "dev": dev}
                history.append(entry)
                if callback is not None:
                    callback(entry)
                if dev[primary] > best["metric"]:
                    best = {"metric": dev[primary], "step": step, "epoch": epoch, "dev": dev}
                    save_run(ckpt, cfg, task_model, sv, cv, label_names, opt)
                if target_metric is not None and dev[primary] >= target_metric:
                    done = True
                    break
            if step >= total_steps:
                done = True
                break

    params, _ = load_checkpoint(ckpt)
    task_model.load_state_dict(params)
    report = {
        "task": cfg.task,
        "side": cfg.side,
        "seed": cfg.seed,
        "primary_metric": primary,
        "steps": step,
        "best_step": best["step"],
        "best_epoch": best["epoch"],
        "dev": best["dev"],
        "test": None,
        "history": history,
    }
    if test_data is not None:
        enc_test = encode_examples(test_data, sv, cv, cfg, label_index)
        report["test"] = evaluate_encoded(task_model, enc_test, label_names, cfg.batch_size)
    (ckpt / REPORT).write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    return TrainResult(report=report, checkpoint_dir=ckpt, task_model=task_model, history=history)


def train_seeds(cfg: RunConfig, seeds: Sequence[int]) -> dict:
    """Run ``train`` once per seed and summarise the primary metric."""
    results = []
    for seed in seeds:
        sub = cfg.replace(seed=seed, checkpoint_dir=str(Path(cfg.checkpoint_dir) / f"seed-{seed}"))
        results.append(train(sub).report)
    primary = PRIMARY_METRIC[cfg.task]
    split = "test" if all(r["test"] for r in results) else "dev"
    values = np.array([r[split][primary] for r in results])
    return {
        "seeds": list(seeds),
        "split": split,
        "metric": primary,
        "values": values.tolist(),
        "mean": float(values.mean()),
        "std": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
    }


def evaluate(checkpoint_dir, data_path, batch_size: int | None = None) -> dict:
    run = load_run(checkpoint_dir)
    data = load_task_data(run.cfg.task, data_path)
    extra = set(_label_set(run.cfg.task, data)) - set(run.labels)
    if extra:
        raise ConfigurationError(f"label set mismatch: {sorted(extra)} not in checkpoint labels")
    index = {lab: i for i, lab in enumerate(run.labels)}
    enc = encode_examples(data, run.subword_vocab, run.char_vocab, run.cfg, index)
    return evaluate_encoded(run.task_model, enc, run.labels, batch_size or run.cfg.batch_size)


def predict(run: Run, sentences: Sequence[Sequence[str]], batch_size: int | None = None) -> list:
    """Labels per sentence: one per word (labeling) or one per sentence."""
    enc = encode_examples([(s, None) for s in sentences], run.subword_vocab, run.char_vocab, run.cfg)
    preds = predict_encoded(run.task_model, enc, run.labels, batch_size or run.cfg.batch_size)
    if run.cfg.task == "classify":
        return preds
    filler = "O" if "O" in run.labels else run.labels[0]
    return [p + [filler] * (len(s) - len(p)) for p, s in zip(preds, sentences)]


# -- pretraining ----------------------------------------------------------
def pretrain(cfg: RunConfig, callback: Callable | None = None) -> TrainResult:
    """Optimise the summed matching + MLM objective on a plain-text corpus."""
    if not cfg.train_file:
        raise ConfigurationError("train_file (the corpus) is required")
    corpus = [w for w, _ in load_task_data("pretrain", cfg.train_file)]
    if not corpus:
        raise InputError(f"{cfg.train_file} contains no sentences")
    sv, cv = resolve_vocabs(cfg, corpus)
    init_rng, shuffle_rng, mask_rng = _seed_streams(cfg.seed)
    with T.precision(np.float32):
        model = EntanglementModel(model_config(cfg, sv, cv), init_rng)
        trainer = Pretrainer(model, init_rng, cfg.mask_rate)
    pairs = [tokenize_pair(words, sv, cv, cfg.max_subwords, cfg.max_chars) for words in corpus]

    n = len(pairs)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.num_epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    opt = T.Adam(trainer.parameters(), lr=cfg.lr, total_steps=total_steps,
                 warmup_steps=cfg.warmup_steps, max_grad_norm=cfg.max_grad_norm)
    ckpt = Path(cfg.checkpoint_dir)
    history = []
    step = 0
    epoch = 0
    trainer.train()
    while step < total_steps:
        epoch += 1
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = collate([pairs[i] for i in order[start : start + cfg.batch_size]])
            parts = trainer.losses(batch, mask_rng)
            value = float(parts["total"].data)
            if not math.isfinite(value):
                path = _dump_nan(ckpt, step, epoch, value, trainer, opt.current_lr())
                raise TrainingError(f"non-finite loss {value} at step {step}; state dumped to {path}")
            parts["total"].backward()
            opt.step()
            opt.zero_grad()
            step += 1
            entry = {"step": step, "epoch": epoch, **{k: float(v.data) for k, v in parts.items()}}
            history.append(entry)
            if callback is not None:
                callback(entry)
            if step >= total_steps:
                break
    save_run(ckpt, cfg, trainer, sv, cv, [], opt)
    report = {"task": "pretrain", "seed": cfg.seed, "steps": step, "first": history[0], "last": history[-1]}
    (ckpt / REPORT).write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    return TrainResult(report=report, checkpoint_dir=ckpt, history=history)


__all__ = [
    "Run",
    "TaskModel",
    "TrainResult",
    "evaluate",
    "load_config",
    "load_run",
    "predict",
    "pretrain",
    "train",
    "train_seeds",
]
