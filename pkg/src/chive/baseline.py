"""Non-hierarchical comparator: one frame-clocked variational encoder/decoder
with every linguistic feature broadcast down to frames."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .decoder import DecoderTrace, DurationMode, ProsodicPrediction, resolve_durations, round_duration
from .encoder import PROSODIC_DIM, EncoderTrace
from .nn import Linear, LSTMStack, ParameterStore
from .structure import TIMING_DIMS, FrameLayout, TreeLayout, ProsodicTargets, UtteranceTree, timing_matrix
from .variational import GaussianPosterior, VariationalLayer, sample

ALL_TIMING = sum(TIMING_DIMS.values())


def linguistic_dim(dims: dict[str, int]) -> int:
    return dims["sentence"] + dims["word"] + dims["syllable"] + dims["phone"]


def phone_context(lay: TreeLayout) -> np.ndarray:
    """Per-phone linguistic features and word/syllable/phone timing."""
    P = lay.num_phones
    syl = lay.phone_syl
    word = lay.syl_word[syl]
    return np.column_stack([
        np.broadcast_to(lay.sentence, (P, lay.sentence.shape[0])),
        lay.word_feats[word],
        lay.syl_feats[syl],
        lay.phone_feats,
        lay.word_timing[word],
        lay.syl_timing[syl],
        lay.phone_timing,
    ])


def frame_context(lay: TreeLayout, fl: FrameLayout) -> np.ndarray:
    return np.column_stack([phone_context(lay)[fl.frame_phone], fl.timing_in_phone])


class BaselineModel:
    kind = "baseline"

    def __init__(self, config, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        H, E = config.hidden, config.embedding
        ctx = linguistic_dim(config.dims) + ALL_TIMING
        self.store = ParameterStore()
        self.enc_rnn = LSTMStack(self.store, "encoder.frame", PROSODIC_DIM + ctx, H, config.layers, rng)
        self.variational = VariationalLayer(self.store, "variational", H, E, rng)
        self.dec_rnn = LSTMStack(self.store, "decoder.frame", E + ctx, H, config.layers, rng)
        self.f0_out = Linear(self.store, "decoder.f0_out", H, 1, rng)
        self.c0_out = Linear(self.store, "decoder.c0_out", H, 1, rng)
        self.duration_out = Linear(self.store, "decoder.duration_out", H, 1, rng)

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding

    def output_layers(self):
        return {"log_f0": self.f0_out, "c0": self.c0_out, "duration": self.duration_out}

    def encode(self, tree: UtteranceTree, targets: ProsodicTargets):
        if targets is None:
            raise ValueError(f"encoding {tree.utterance_id!r} needs prosodic targets")
        lay = tree.layout()
        fl = lay.frames(targets.durations)
        x = np.column_stack([targets.log_f0, targets.c0, frame_context(lay, fl)])
        h = self.enc_rnn(x)
        trace = EncoderTrace(frame_steps=fl.num_frames)
        return h[fl.num_frames - 1], trace

    def posterior(self, tree: UtteranceTree, targets: ProsodicTargets) -> GaussianPosterior:
        summary, _ = self.encode(tree, targets)
        return self.variational.project(summary)

    def decode(self, tree: UtteranceTree, embedding, mode=DurationMode.TEACHER_FORCED,
               durations=None) -> ProsodicPrediction:
        mode = DurationMode(mode)
        emb = ad.tensor(embedding)
        if emb.shape != (self.embedding_dim,):
            raise ValueError(f"embedding shape {emb.shape} != ({self.embedding_dim},)")
        if mode == DurationMode.FREE_RUNNING:
            return self._decode_free(tree, emb.value)
        lay = tree.layout()
        realized = resolve_durations(tree, mode, durations, None)
        fl = lay.frames(realized)
        T = fl.num_frames
        x = ad.concat([ad.take_rows(emb, np.zeros(T, dtype=np.int64)), frame_context(lay, fl)])
        h = self.dec_rnn(x)
        log_f0 = ad.reshape(self.f0_out(h), (T,))
        c0 = ad.reshape(self.c0_out(h), (T,))
        raw = ad.reshape(self.duration_out(ad.take_rows(h, fl.phone_start)), (lay.num_phones,))
        trace = DecoderTrace(phone_steps=lay.num_phones, c0_unrolls=realized.tolist(),
                             f0_unrolls=fl.syl_frames.tolist())
        return ProsodicPrediction(raw, realized, log_f0, c0, mode, trace)

    def _decode_free(self, tree: UtteranceTree, emb: np.ndarray) -> ProsodicPrediction:
        lay = tree.layout()
        ctx = phone_context(lay)
        first = timing_matrix(np.zeros(1), TIMING_DIMS["frame"])
        state, hs, raw, realized = None, [], [], []
        for p in range(lay.num_phones):
            x0 = np.concatenate([emb, ctx[p], first[0]])[None, :]
            h, state = self.dec_rnn.run_stateful(x0, state)
            d_hat = float(h[0] @ self.duration_out.weight.value[:, 0] + self.duration_out.bias.value[0])
            n = round_duration(d_hat)
            raw.append(d_hat)
            realized.append(n)
            hs.append(h)
            if n > 1:
                timing = timing_matrix(np.arange(1, n) / (n - 1), TIMING_DIMS["frame"])
                xs = np.column_stack([np.broadcast_to(np.concatenate([emb, ctx[p]]), (n - 1, emb.shape[0] + ctx.shape[1])),
                                      timing])
                h, state = self.dec_rnn.run_stateful(xs, state)
                hs.append(h)
        H = np.concatenate(hs)
        realized = np.array(realized, dtype=np.int64)
        fl = lay.frames(realized)
        log_f0 = H @ self.f0_out.weight.value[:, 0] + self.f0_out.bias.value[0]
        c0 = H @ self.c0_out.weight.value[:, 0] + self.c0_out.bias.value[0]
        trace = DecoderTrace(phone_steps=lay.num_phones, c0_unrolls=realized.tolist(),
                             f0_unrolls=fl.syl_frames.tolist())
        return ProsodicPrediction(ad.tensor(np.array(raw)), realized, ad.tensor(log_f0), ad.tensor(c0),
                                  DurationMode.FREE_RUNNING, trace)

    def forward(self, tree: UtteranceTree, targets: ProsodicTargets, noise):
        post = self.posterior(tree, targets)
        emb = sample(post, noise)
        pred = self.decode(tree, emb, DurationMode.TEACHER_FORCED, targets.durations)
        return pred, post
