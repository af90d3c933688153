"""Datasets, metrics, configuration and the train/evaluate/predict loops."""

from .config import RunConfig, load_config
from .data import load_classification, load_conll, load_corpus, write_classification, write_conll
from .metrics import accuracy, extract_spans, macro_f1, span_f1, token_accuracy
from .runner import Run, TaskModel, TrainResult, evaluate, load_run, predict, pretrain, train, train_seeds
