"""Hierarchical decoder with data-dependent unroll lengths.

Syllable- and phone-rate stacks turn the sentence prosody embedding and the
linguistic features into per-phone activations. Three heads read those:
a duration stack over phones, a c0 stack unrolled for each phone's frame
count, and an F0 stack unrolled once per syllable over the summed frame
counts of its phones.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Linear, LSTMStack, ParameterStore
from .structure import FRAME_SHIFT_MS, TIMING_DIMS, UtteranceTree


class DurationMode(str, Enum):
    TEACHER_FORCED = "teacher_forced"
    FREE_RUNNING = "free_running"


def round_duration(raw: float) -> int:
    """Round half away from zero, never below one frame."""
    raw = float(raw)
    if not math.isfinite(raw):
        raise ValueError(f"non-finite duration {raw}")
    r = math.floor(abs(raw) + 0.5)
    return max(1, int(math.copysign(r, raw)))


def round_durations(raw) -> np.ndarray:
    return np.array([round_duration(x) for x in np.ravel(raw)], dtype=np.int64)


@dataclass
class DecoderTrace:
    syllable_steps: int = 0
    phone_steps: int = 0
    duration_steps: int = 0
    c0_unrolls: list[int] = field(default_factory=list)
    f0_unrolls: list[int] = field(default_factory=list)

    @property
    def c0_steps(self) -> int:
        return int(sum(self.c0_unrolls))

    @property
    def f0_steps(self) -> int:
        return int(sum(self.f0_unrolls))


@dataclass
class ProsodicPrediction:
    durations_raw: Tensor
    durations_realized: np.ndarray
    log_f0: Tensor
    c0: Tensor
    mode: DurationMode
    trace: DecoderTrace | None = field(default=None, repr=False)

    @property
    def num_frames(self) -> int:
        return int(self.log_f0.shape[0])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "frame_shift_ms": FRAME_SHIFT_MS,
            "durations_raw": self.durations_raw.value.tolist(),
            "durations_realized": self.durations_realized.tolist(),
            "log_f0": self.log_f0.value.tolist(),
            "c0": self.c0.value.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def contour_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame_ms", "log_f0", "c0"])
        for t, (lf, c) in enumerate(zip(self.log_f0.value, self.c0.value)):
            w.writerow([f"{t * FRAME_SHIFT_MS:g}", repr(float(lf)), repr(float(c))])
        return buf.getvalue()

    def duration_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phone", "start_ms", "duration_raw", "duration_frames", "duration_ms"])
        start = 0
        for p, (raw, n) in enumerate(zip(self.durations_raw.value, self.durations_realized)):
            w.writerow([p, f"{start * FRAME_SHIFT_MS:g}", repr(float(raw)), int(n), f"{n * FRAME_SHIFT_MS:g}"])
            start += int(n)
        return buf.getvalue()


def resolve_durations(tree: UtteranceTree, mode: DurationMode, durations, raw: np.ndarray | None) -> np.ndarray:
    if mode == DurationMode.TEACHER_FORCED:
        if durations is not None:
            return np.asarray(durations, dtype=np.int64)
        return tree.durations()
    if raw is None:
        raise ValueError("free-running decode needs predicted durations")
    return round_durations(raw)


class HierarchicalDecoder:
    def __init__(self, store: ParameterStore, dims: dict[str, int], embedding: int, hidden: int,
                 layers: int, duration_layers: int, rng: np.random.Generator, name: str = "decoder"):
        ling_syl = dims["sentence"] + dims["word"] + dims["syllable"]
        syl_in = embedding + ling_syl + TIMING_DIMS["word"] + TIMING_DIMS["syllable"]
        phone_in = hidden + ling_syl + dims["phone"] + TIMING_DIMS["phone"]
        self.syllable_rnn = LSTMStack(store, f"{name}.syllable", syl_in, hidden, layers, rng)
        self.phone_rnn = LSTMStack(store, f"{name}.phone", phone_in, hidden, layers, rng)
        self.duration_rnn = LSTMStack(store, f"{name}.duration", hidden, hidden, duration_layers, rng)
        self.duration_out = Linear(store, f"{name}.duration_out", hidden, 1, rng)
        self.c0_rnn = LSTMStack(store, f"{name}.c0", hidden + TIMING_DIMS["frame"], hidden, layers, rng)
        self.c0_out = Linear(store, f"{name}.c0_out", hidden, 1, rng)
        self.f0_rnn = LSTMStack(store, f"{name}.f0", 2 * hidden + TIMING_DIMS["frame"], hidden, layers, rng)
        self.f0_out = Linear(store, f"{name}.f0_out", hidden, 1, rng)
        self.embedding = embedding

    def decode(self, tree: UtteranceTree, embedding, mode: DurationMode = DurationMode.TEACHER_FORCED,
               durations=None) -> ProsodicPrediction:
        mode = DurationMode(mode)
        emb = ad.tensor(embedding)
        if emb.shape != (self.embedding,):
            raise ValueError(f"embedding shape {emb.shape} != ({self.embedding},)")
        lay = tree.layout()
        S, P = lay.num_syllables, lay.num_phones
        ling_syl = np.column_stack([
            np.broadcast_to(lay.sentence, (S, lay.sentence.shape[0])),
            lay.word_feats[lay.syl_word],
            lay.syl_feats,
        ])

        syl_x = ad.concat([ad.take_rows(emb, np.zeros(S, dtype=np.int64)),
                           np.column_stack([ling_syl, lay.word_timing[lay.syl_word], lay.syl_timing])])
        a = self.syllable_rnn(syl_x)

        phone_x = ad.concat([ad.take_rows(a, lay.phone_syl),
                             np.column_stack([ling_syl[lay.phone_syl], lay.phone_feats, lay.phone_timing])])
        b = self.phone_rnn(phone_x)

        raw = ad.reshape(self.duration_out(self.duration_rnn(b)), (P,))
        realized = resolve_durations(tree, mode, durations, raw.value)
        fl = lay.frames(realized)

        c0_x = ad.concat([ad.take_rows(b, fl.frame_phone), fl.timing_in_phone])
        c0 = ad.reshape(self.c0_out(self.c0_rnn(c0_x)), (fl.num_frames,))

        syl_ctx = ad.concat([a, ad.take_rows(b, lay.syl_last_phone)])
        f0_x = ad.concat([ad.take_rows(syl_ctx, fl.frame_syl), fl.timing_in_syllable])
        log_f0 = ad.reshape(self.f0_out(self.f0_rnn(f0_x)), (fl.num_frames,))

        trace = DecoderTrace(syllable_steps=S, phone_steps=P, duration_steps=P,
                             c0_unrolls=realized.tolist(), f0_unrolls=fl.syl_frames.tolist())
        return ProsodicPrediction(raw, realized, log_f0, c0, mode, trace)

    def output_layers(self) -> dict[str, Linear]:
        return {"log_f0": self.f0_out, "c0": self.c0_out, "duration": self.duration_out}
