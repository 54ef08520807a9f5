"""Hierarchical encoder: frame- and phone-rate stacks clocked by syllables,
feeding a syllable-rate stack whose last output summarises the utterance."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import LSTMStack, ParameterStore
from .structure import TIMING_DIMS, ProsodicTargets, UtteranceTree

PROSODIC_DIM = 2  # log-F0, c0


@dataclass
class EncoderTrace:
    frame_steps: int = 0
    frame_resets: int = 0
    frame_captures: int = 0
    phone_steps: int = 0
    phone_resets: int = 0
    phone_captures: int = 0
    syllable_steps: int = 0
    frame_capture_values: np.ndarray | None = field(default=None, repr=False)
    phone_capture_values: np.ndarray | None = field(default=None, repr=False)
    syllable_inputs: np.ndarray | None = field(default=None, repr=False)


class HierarchicalEncoder:
    def __init__(self, store: ParameterStore, dims: dict[str, int], hidden: int, layers: int,
                 rng: np.random.Generator, name: str = "encoder"):
        frame_in = PROSODIC_DIM + TIMING_DIMS["frame"]
        phone_in = dims["phone"] + TIMING_DIMS["phone"]
        syl_in = (2 * hidden + dims["syllable"] + dims["word"] + dims["sentence"]
                  + TIMING_DIMS["syllable"] + TIMING_DIMS["word"])
        self.frame_rnn = LSTMStack(store, f"{name}.frame", frame_in, hidden, layers, rng)
        self.phone_rnn = LSTMStack(store, f"{name}.phone", phone_in, hidden, layers, rng)
        self.syllable_rnn = LSTMStack(store, f"{name}.syllable", syl_in, hidden, layers, rng)
        self.hidden = hidden

    def encode(self, tree: UtteranceTree, targets: ProsodicTargets | None) -> tuple[Tensor, EncoderTrace]:
        if targets is None:
            raise ValueError(f"encoding {tree.utterance_id!r} needs prosodic targets")
        lay = tree.layout()
        fl = lay.frames(targets.durations)
        if targets.log_f0.shape[0] != fl.num_frames or targets.c0.shape[0] != fl.num_frames:
            raise ValueError("targets length does not match durations")
        S = lay.num_syllables

        # frame rate: state reset at each syllable start, output read at its last frame
        frame_x = np.column_stack([targets.log_f0, targets.c0, fl.timing_in_syllable])
        frame_resets = np.zeros(fl.num_frames, dtype=np.bool_)
        frame_resets[fl.syl_start] = True
        frame_h = self.frame_rnn(frame_x, frame_resets)
        frame_cap = ad.take_rows(frame_h, fl.syl_last_frame)

        # phone rate, same clocking
        phone_x = np.column_stack([lay.phone_feats, lay.phone_timing])
        phone_resets = np.zeros(lay.num_phones, dtype=np.bool_)
        phone_resets[np.concatenate([[0], lay.syl_last_phone[:-1] + 1])] = True
        phone_h = self.phone_rnn(phone_x, phone_resets)
        phone_cap = ad.take_rows(phone_h, lay.syl_last_phone)

        syl_const = np.column_stack([
            lay.syl_feats,
            lay.word_feats[lay.syl_word],
            np.broadcast_to(lay.sentence, (S, lay.sentence.shape[0])),
            lay.syl_timing,
            lay.word_timing[lay.syl_word],
        ])
        syl_x = ad.concat([frame_cap, phone_cap, syl_const])
        syl_h = self.syllable_rnn(syl_x)
        summary = syl_h[S - 1]

        trace = EncoderTrace(
            frame_steps=fl.num_frames, frame_resets=int(frame_resets.sum()), frame_captures=len(fl.syl_last_frame),
            phone_steps=lay.num_phones, phone_resets=int(phone_resets.sum()),
            phone_captures=len(lay.syl_last_phone), syllable_steps=S,
            frame_capture_values=frame_cap.value, phone_capture_values=phone_cap.value,
            syllable_inputs=syl_x.value,
        )
        return summary, trace
