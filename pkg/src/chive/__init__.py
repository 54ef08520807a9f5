"""Hierarchical conditional VAE for speech prosody, with a frame-rate
baseline, a synthetic corpus with hidden style factors, and a CLI."""
from .corpus import CorpusConfig, Utterance, generate, read_corpus, split, write_corpus
from .decoder import DurationMode, ProsodicPrediction, round_duration
from .evaluation import InferenceMode, evaluate, ordering_report, synthesize, transfer_correlation
from .model import ModelConfig, build_model, matched_baseline
from .structure import ProsodicTargets, UtteranceTree, validate

__version__ = "0.1.0"

__all__ = [
    "CorpusConfig", "Utterance", "generate", "read_corpus", "split", "write_corpus",
    "DurationMode", "ProsodicPrediction", "round_duration",
    "InferenceMode", "evaluate", "ordering_report", "synthesize", "transfer_correlation",
    "ModelConfig", "build_model", "matched_baseline",
    "ProsodicTargets", "UtteranceTree", "validate",
]
