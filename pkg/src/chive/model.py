"""Model assembly: configuration, the hierarchical CHiVE model, and the
shared interface the baseline also implements."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tensor
from .decoder import DurationMode, HierarchicalDecoder, ProsodicPrediction
from .encoder import EncoderTrace, HierarchicalEncoder
from .nn import ParameterStore
from .structure import ProsodicTargets, UtteranceTree
from .variational import GaussianPosterior, VariationalLayer, sample

MODEL_KINDS = ("chive", "baseline")


@dataclass
class ModelConfig:
    dims: dict[str, int]
    kind: str = "chive"
    hidden: int = 32
    embedding: int = 256
    layers: int = 2
    duration_layers: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        missing = {"sentence", "word", "syllable", "phone"} - set(self.dims)
        if missing:
            raise ValueError(f"feature dims missing {sorted(missing)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class ChiveModel:
    kind = "chive"

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.store = ParameterStore()
        self.encoder = HierarchicalEncoder(self.store, config.dims, config.hidden, config.layers, rng)
        self.variational = VariationalLayer(self.store, "variational", config.hidden, config.embedding, rng)
        self.decoder = HierarchicalDecoder(self.store, config.dims, config.embedding, config.hidden,
                                           config.layers, config.duration_layers, rng)

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding

    def encode(self, tree: UtteranceTree, targets: ProsodicTargets) -> tuple[Tensor, EncoderTrace]:
        return self.encoder.encode(tree, targets)

    def posterior(self, tree: UtteranceTree, targets: ProsodicTargets) -> GaussianPosterior:
        summary, _ = self.encoder.encode(tree, targets)
        return self.variational.project(summary)

    def decode(self, tree: UtteranceTree, embedding, mode=DurationMode.TEACHER_FORCED,
               durations=None) -> ProsodicPrediction:
        return self.decoder.decode(tree, embedding, mode, durations)

    def forward(self, tree: UtteranceTree, targets: ProsodicTargets, noise) -> tuple[ProsodicPrediction, GaussianPosterior]:
        post = self.posterior(tree, targets)
        emb = sample(post, noise)
        pred = self.decode(tree, emb, DurationMode.TEACHER_FORCED, targets.durations)
        return pred, post

    def output_layers(self):
        return self.decoder.output_layers()


def set_output_bias(model, log_f0: float, c0: float, duration: float) -> None:
    """Centre the scalar readouts on corpus means (weights untouched)."""
    for key, value in (("log_f0", log_f0), ("c0", c0), ("duration", duration)):
        model.output_layers()[key].bias.value[:] = value


def build_model(config: ModelConfig, seed: int = 0):
    if config.kind == "chive":
        return ChiveModel(config, seed)
    from .baseline import BaselineModel

    return BaselineModel(config, seed)


def count_params(config: ModelConfig) -> int:
    return build_model(config, 0).store.num_values()


def matched_baseline(config: ModelConfig, tolerance: float = 0.10) -> ModelConfig:
    """Baseline config whose hidden width brings its parameter count closest
    to that of the hierarchical model described by ``config``."""
    target = count_params(ModelConfig(config.dims, "chive", config.hidden, config.embedding,
                                      config.layers, config.duration_layers))
    best, best_gap = None, None
    for h in range(4, 8 * config.hidden + 1):
        cand = ModelConfig(config.dims, "baseline", h, config.embedding, config.layers, config.duration_layers)
        gap = abs(_baseline_params(cand) - target)
        if best_gap is None or gap < best_gap:
            best, best_gap = cand, gap
        elif _baseline_params(cand) > target:
            break
    if best_gap > tolerance * target:
        raise ValueError(f"no baseline width within {tolerance:.0%} of {target} parameters")
    return best


def _baseline_params(config: ModelConfig) -> int:
    # closed form; mirrors BaselineModel's layers without allocating them
    from .baseline import ALL_TIMING, linguistic_dim
    from .encoder import PROSODIC_DIM

    H, E, L = config.hidden, config.embedding, config.layers
    ctx = linguistic_dim(config.dims) + ALL_TIMING

    def stack(n_in):
        return 4 * H * (n_in + H + 1) + (L - 1) * 4 * H * (2 * H + 1)

    return stack(PROSODIC_DIM + ctx) + (H + 1) * 2 * E + stack(E + ctx) + 3 * (H + 1)
