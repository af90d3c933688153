"""Run configuration: flat ``key = value`` files plus command-line overrides.

Example file::

    # comments start with '#'
    task = ner
    side = subw
    num_coattention = 2
    pe_strategy = c
    train_file = data/train.conll
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path

from ..entangle import PE_STRATEGIES
from ..errors import ConfigurationError, ParseError
from ..heads import SIDES

log = logging.getLogger(__name__)

TASKS = ("ner", "pos", "classify", "pretrain")
SEED_ENV = "ENTANGLER_SEED"


@dataclass
class RunConfig:
    task: str = "ner"
    side: str = "subw"
    # model
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    feed_forward_size: int = 256
    num_coattention: int = 1
    pe_strategy: str = "none"
    dropout: float = 0.1
    # optimisation
    lr: float = 2e-5
    warmup_steps: int = 0
    epochs: int | None = None
    max_steps: int | None = None
    batch_size: int = 16
    seed: int = 42
    eval_every: int | None = None
    max_grad_norm: float | None = None
    mask_rate: float = 0.15
    # tokenization
    num_merges: int = 1000
    max_subwords: int = 128
    max_chars: int = 512
    # paths
    train_file: str | None = None
    dev_file: str | None = None
    test_file: str | None = None
    subword_vocab: str | None = None
    char_vocab: str | None = None
    checkpoint_dir: str = "checkpoints/run"
    init_checkpoint: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigurationError(f"task must be one of {TASKS}, got {self.task!r}")
        self.side = str(self.side).lower()
        if self.side not in SIDES:
            raise ConfigurationError(f"side must be one of {SIDES}, got {self.side!r}")
        self.pe_strategy = str(self.pe_strategy).lower()
        if self.pe_strategy not in PE_STRATEGIES:
            raise ConfigurationError(f"pe_strategy must be one of {PE_STRATEGIES}")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigurationError("epochs must be positive")

    @property
    def num_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return 25 if self.task == "classify" else 50

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(key: str, text: str):
    f = _FIELDS.get(key)
    if f is None:
        raise ConfigurationError(f"unknown config key {key!r}")
    text = text.strip()
    kind = str(f.type)
    if text.lower() in ("none", "null", "") and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigurationError(f"config key {key!r} expects {kind.split(' ')[0]}, got {text!r}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", source, lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            values[key] = _convert(key, value)
        except ConfigurationError as exc:
            raise ParseError(str(exc), source, lineno) from None
    return values


def load_config(path=None, overrides=(), env=None) -> RunConfig:
    """Build a RunConfig from a file, ``key=value`` overrides and the environment.

    Precedence, lowest first: defaults, file, overrides, ``ENTANGLER_SEED``.
    """
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8"), str(path)))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        values[key.strip()] = _convert(key.strip(), value)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        values["seed"] = _convert("seed", env[SEED_ENV])
    cfg = RunConfig(**values)
    for name in ("batch_size", "dropout", "max_subwords", "max_chars"):
        if name not in values:
            log.info("using default %s = %s", name, getattr(cfg, name))
    return cfg
