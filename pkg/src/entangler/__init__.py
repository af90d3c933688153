"""Character/subword entanglement model, trainable from scratch on CPU."""

from .batch import Batch, LabeledBatch, collate
from .encoder import Encoder, EncoderConfig, EncoderOutput, sinusoidal_pe
from .entangle import CoAttentionConfig, CoTRM, EntangledStates, Entangler, pe_indices
from .heads import (
    ClassificationHead,
    LabelingHead,
    class_log_probs,
    classification_loss,
    classify,
    labeling_loss,
    predict_labels,
    word_log_probs,
    word_probs,
)
from .model import EntanglementModel, ModelConfig
from .pretrain import MaskedBatch, MatchingScale, Pretrainer, mask_tokens, matching_loss, mlm_loss
from .tokenize import CharWordLabels, TokenizedPair, Vocab, build_vocabs, char_word_labels, tokenize_pair

__version__ = "0.1.0"
