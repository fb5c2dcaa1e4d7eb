"""Dialog topic spotting with a hierarchical self-attention network.

The package bundles a small reverse-mode autodiff engine, a dialog corpus
toolkit (tokenization, splits, synthetic corpora), the hierarchical BiLSTM
model with self-attention pooling, its training/evaluation machinery,
classical baselines, and sklearn-style estimators on top.
"""

from .autodiff import Tensor, Tape, backward, grad_check
from .corpus import (Corpus, Dialog, SplitCorpus, Utterance, Vocab, build_vocab,
                     corpus_stats, load_corpus, make_swbd2_split, save_corpus,
                     standard_benchmark, synth_corpus, tokenize)
from .embeddings import EmbeddingMatrix, init_random, load_pretrained, lookup
from .errors import (NumericalError, ParseError, ShapeError, TopicSpotError,
                     ValidationError)
from .estimators import BagOfWordsLogistic, HierarchicalTopicClassifier, MajorityTopic
from .evaluation import (ConfusionMatrix, EvalReport, OnlineCurve, confusion,
                         evaluate, make_subdialog, online_eval)
from .model import (ModelConfig, ModelParams, TopicPrediction, init_params,
                    load_checkpoint, predict, predict_dialog, save_checkpoint)
from .training import AdamState, TrainConfig, TrainHistory, adam_step, clip_gradients, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "BagOfWordsLogistic", "ConfusionMatrix", "Corpus", "Dialog",
    "EmbeddingMatrix", "EvalReport", "HierarchicalTopicClassifier", "MajorityTopic",
    "ModelConfig", "ModelParams", "NumericalError", "OnlineCurve", "ParseError",
    "ShapeError", "SplitCorpus", "Tape", "Tensor", "TopicPrediction", "TopicSpotError",
    "TrainConfig", "TrainHistory", "Utterance", "ValidationError", "Vocab",
    "adam_step", "backward", "build_vocab", "clip_gradients", "confusion",
    "corpus_stats", "evaluate", "grad_check", "init_params", "init_random",
    "load_checkpoint", "load_corpus", "load_pretrained", "lookup", "make_subdialog",
    "make_swbd2_split", "online_eval", "predict", "predict_dialog", "save_checkpoint",
    "save_corpus", "standard_benchmark", "synth_corpus", "tokenize", "train",
]
