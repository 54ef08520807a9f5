"""Linguistic trees, prosodic targets, timing signals and their JSON form.

An utterance is a sentence -> word -> syllable -> phone hierarchy with a
feature vector at every level. Phones optionally carry ground-truth
durations in 5 ms frames; frame-level log-F0 and c0 live in
:class:`ProsodicTargets`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FRAME_SHIFT_MS = 5.0
TIMING_DIMS = {"word": 64, "syllable": 4, "phone": 4, "frame": 3}
SCHEMA_VERSION = 1
UTT_SUFFIX = ".utt.json"


class SchemaError(ValueError):
    """Raised for malformed or unsupported utterance documents."""


def _frozen(x, dtype=np.float64) -> np.ndarray:
    a = np.array(x, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PhoneNode:
    features: np.ndarray
    duration_frames: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(self.features))


@dataclass(frozen=True, eq=False)
class SyllableNode:
    features: np.ndarray
    phones: tuple[PhoneNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(self.features))
        object.__setattr__(self, "phones", tuple(self.phones))


@dataclass(frozen=True, eq=False)
class WordNode:
    features: np.ndarray
    syllables: tuple[SyllableNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(self.features))
        object.__setattr__(self, "syllables", tuple(self.syllables))


@dataclass(frozen=True, eq=False)
class UtteranceTree:
    sentence_features: np.ndarray
    words: tuple[WordNode, ...]
    utterance_id: str = ""
    _layout: "TreeLayout | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sentence_features", _frozen(self.sentence_features))
        object.__setattr__(self, "words", tuple(self.words))

    @property
    def syllables(self) -> list[SyllableNode]:
        return [s for w in self.words for s in w.syllables]

    @property
    def phones(self) -> list[PhoneNode]:
        return [p for s in self.syllables for p in s.phones]

    @property
    def has_durations(self) -> bool:
        phones = self.phones
        return bool(phones) and all(p.duration_frames is not None for p in phones)

    def durations(self) -> np.ndarray:
        if not self.has_durations:
            raise ValueError(f"utterance {self.utterance_id!r} carries no ground-truth durations")
        return np.array([p.duration_frames for p in self.phones], dtype=np.int64)

    def without_durations(self) -> "UtteranceTree":
        words = [
            WordNode(w.features, [SyllableNode(s.features, [PhoneNode(p.features) for p in s.phones])
                                  for s in w.syllables])
            for w in self.words
        ]
        return UtteranceTree(self.sentence_features, words, self.utterance_id)

    def with_durations(self, durations: Sequence[int]) -> "UtteranceTree":
        it = iter(int(d) for d in durations)
        words = [
            WordNode(w.features, [SyllableNode(s.features, [PhoneNode(p.features, next(it)) for p in s.phones])
                                  for s in w.syllables])
            for w in self.words
        ]
        return UtteranceTree(self.sentence_features, words, self.utterance_id)

    def layout(self) -> "TreeLayout":
        if self._layout is None:
            object.__setattr__(self, "_layout", TreeLayout.from_tree(self))
        return self._layout


@dataclass(frozen=True, eq=False)
class ProsodicTargets:
    """Frame-level log-F0 (natural log Hz) and c0, plus frames per phone."""

    log_f0: np.ndarray
    c0: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "log_f0", _frozen(self.log_f0))
        object.__setattr__(self, "c0", _frozen(self.c0))
        object.__setattr__(self, "durations", _frozen(self.durations, np.int64))

    @property
    def num_frames(self) -> int:
        return int(self.log_f0.shape[0])

    def durations_ms(self) -> np.ndarray:
        return FRAME_SHIFT_MS * self.durations


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def add(self, code: str, detail: str) -> None:
        self.violations.append(Violation(code, detail))


def _check_dims(report, level, vecs, expected):
    dims = {int(v.shape[0]) if v.ndim == 1 else -1 for v in vecs}
    if expected is not None:
        dims.add(int(expected))
    if len(dims) > 1:
        report.add("dimension_mismatch", f"{level} feature sizes {sorted(dims)}")


def validate(
    tree: UtteranceTree,
    targets: ProsodicTargets | None = None,
    dims: dict[str, int] | None = None,
) -> ValidationReport:
    """Check the structural invariants of a (tree, targets) pair.

    ``dims`` optionally pins per-level feature sizes (keys ``sentence``,
    ``word``, ``syllable``, ``phone``) so corpus-wide agreement can be
    checked one utterance at a time.
    """
    dims = dims or {}
    report = ValidationReport()
    if not tree.words:
        report.add("empty_utterance", "utterance has no words")
    for wi, w in enumerate(tree.words):
        if not w.syllables:
            report.add("empty_word", f"word {wi} has no syllables")
        for si, s in enumerate(w.syllables):
            if not s.phones:
                report.add("empty_syllable", f"word {wi} syllable {si} has no phones")

    _check_dims(report, "sentence", [tree.sentence_features], dims.get("sentence"))
    _check_dims(report, "word", [w.features for w in tree.words], dims.get("word"))
    _check_dims(report, "syllable", [s.features for s in tree.syllables], dims.get("syllable"))
    phones = tree.phones
    _check_dims(report, "phone", [p.features for p in phones], dims.get("phone"))

    for node_vecs in ([tree.sentence_features], [w.features for w in tree.words],
                      [s.features for s in tree.syllables], [p.features for p in phones]):
        if any(not np.all(np.isfinite(v)) for v in node_vecs):
            report.add("nonfinite_feature", "feature vector contains NaN or Inf")
            break

    given = [p.duration_frames for p in phones if p.duration_frames is not None]
    if given and len(given) != len(phones):
        report.add("partial_durations", f"{len(given)} of {len(phones)} phones carry durations")
    if any(int(d) < 1 for d in given):
        report.add("nonpositive_duration", "phone duration below 1 frame")

    if targets is not None:
        dur = np.asarray(targets.durations)
        if np.any(dur < 1):
            report.add("nonpositive_duration", "target duration below 1 frame")
        if dur.shape[0] != len(phones):
            report.add("phone_count_mismatch", f"{dur.shape[0]} durations for {len(phones)} phones")
        elif len(given) == len(phones) and not np.array_equal(dur, np.array(given)):
            report.add("durations_disagree", "target durations differ from tree durations")
        total = int(dur.sum())
        if targets.log_f0.shape[0] != total or targets.c0.shape[0] != total:
            report.add(
                "length_mismatch",
                f"T != sum(durations): sum={total}, log_f0={targets.log_f0.shape[0]}, c0={targets.c0.shape[0]}",
            )
        if not (np.all(np.isfinite(targets.log_f0)) and np.all(np.isfinite(targets.c0))):
            report.add("nonfinite_target", "prosodic targets contain NaN or Inf")
    return report


# ---------------------------------------------------------------------------
# timing signals and positions


def timing_signal(relative_position: float, dim: int) -> np.ndarray:
    """Cosine coarse coding of a relative position in [0, 1].

    Component j is a raised-cosine bump centred at j/(dim-1) with half-width
    1/(dim-1).
    """
    r = float(relative_position)
    if not (0.0 <= r <= 1.0) or math.isnan(r):
        raise ValueError(f"relative position {r} outside [0, 1]")
    if dim < 2:
        raise ValueError("timing signal needs dim >= 2")
    return timing_matrix(np.array([r]), dim)[0]


def timing_matrix(positions: np.ndarray, dim: int) -> np.ndarray:
    """Row-wise :func:`timing_signal` for a vector of positions."""
    r = np.asarray(positions, dtype=np.float64)[:, None]
    width = 1.0 / (dim - 1)
    centers = np.arange(dim) * width
    u = np.clip((r - centers[None, :]) / width, -1.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * u))


def relative_positions(n: int) -> np.ndarray:
    if n <= 1:
        return np.zeros(max(n, 0))
    return np.arange(n) / (n - 1)


@dataclass(frozen=True)
class Positions:
    word: np.ndarray
    syllable: np.ndarray  # within word
    phone: np.ndarray  # within syllable
    frame: np.ndarray | None  # within phone
    frame_in_syllable: np.ndarray | None


def positions(tree: UtteranceTree, durations: Sequence[int] | None = None) -> Positions:
    """Relative position of every node among its siblings.

    Frame positions (within phone and within syllable) need durations; they
    default to the tree's own and are ``None`` when it has none.
    """
    word, syl, phone = _level_positions(tree)
    if durations is None and tree.has_durations:
        durations = tree.durations()
    frame = frame_syl = None
    if durations is not None:
        fl = tree.layout().frames(durations)
        frame = np.concatenate([relative_positions(int(d)) for d in fl.durations])
        frame_syl = np.concatenate([relative_positions(int(n)) for n in fl.syl_frames])
    return Positions(word, syl, phone, frame, frame_syl)


def _level_positions(tree: UtteranceTree):
    word = relative_positions(len(tree.words))
    syl = np.concatenate([relative_positions(len(w.syllables)) for w in tree.words])
    phone = np.concatenate([relative_positions(len(s.phones)) for s in tree.syllables])
    return word, syl, phone


# ---------------------------------------------------------------------------
# flattened views used by the networks


@dataclass(frozen=True, eq=False)
class TreeLayout:
    """Index arrays and constant feature blocks for one tree."""

    sentence: np.ndarray
    word_feats: np.ndarray
    syl_feats: np.ndarray
    phone_feats: np.ndarray
    syl_word: np.ndarray
    phone_syl: np.ndarray
    syl_last_phone: np.ndarray
    word_timing: np.ndarray
    syl_timing: np.ndarray
    phone_timing: np.ndarray

    @property
    def num_words(self) -> int:
        return self.word_feats.shape[0]

    @property
    def num_syllables(self) -> int:
        return self.syl_feats.shape[0]

    @property
    def num_phones(self) -> int:
        return self.phone_feats.shape[0]

    @classmethod
    def from_tree(cls, tree: UtteranceTree) -> "TreeLayout":
        word_pos, syl_pos, phone_pos = _level_positions(tree)
        syl_word, phone_syl, last = [], [], []
        for wi, w in enumerate(tree.words):
            for s in w.syllables:
                si = len(syl_word)
                syl_word.append(wi)
                phone_syl.extend([si] * len(s.phones))
                last.append(len(phone_syl) - 1)
        return cls(
            sentence=tree.sentence_features,
            word_feats=np.stack([w.features for w in tree.words]),
            syl_feats=np.stack([s.features for s in tree.syllables]),
            phone_feats=np.stack([p.features for p in tree.phones]),
            syl_word=np.array(syl_word, dtype=np.int64),
            phone_syl=np.array(phone_syl, dtype=np.int64),
            syl_last_phone=np.array(last, dtype=np.int64),
            word_timing=timing_matrix(word_pos, TIMING_DIMS["word"]),
            syl_timing=timing_matrix(syl_pos, TIMING_DIMS["syllable"]),
            phone_timing=timing_matrix(phone_pos, TIMING_DIMS["phone"]),
        )

    def frames(self, durations: Sequence[int]) -> "FrameLayout":
        return FrameLayout.build(self, np.asarray(durations, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class FrameLayout:
    durations: np.ndarray
    frame_phone: np.ndarray
    frame_syl: np.ndarray
    syl_frames: np.ndarray
    syl_start: np.ndarray
    syl_last_frame: np.ndarray
    phone_start: np.ndarray
    timing_in_phone: np.ndarray
    timing_in_syllable: np.ndarray

    @property
    def num_frames(self) -> int:
        return int(self.frame_phone.shape[0])

    @classmethod
    def build(cls, lay: TreeLayout, durations: np.ndarray) -> "FrameLayout":
        if durations.shape[0] != lay.num_phones:
            raise ValueError(f"{durations.shape[0]} durations for {lay.num_phones} phones")
        if np.any(durations < 1):
            raise ValueError("durations must be >= 1 frame")
        frame_phone = np.repeat(np.arange(lay.num_phones), durations)
        frame_syl = lay.phone_syl[frame_phone]
        syl_frames = np.bincount(lay.phone_syl, weights=durations, minlength=lay.num_syllables).astype(np.int64)
        syl_end = np.cumsum(syl_frames)
        phone_start = np.concatenate([[0], np.cumsum(durations)[:-1]])
        in_phone = np.concatenate([relative_positions(int(d)) for d in durations])
        in_syl = np.concatenate([relative_positions(int(n)) for n in syl_frames])
        return cls(
            durations=durations,
            frame_phone=frame_phone,
            frame_syl=frame_syl,
            syl_frames=syl_frames,
            syl_start=syl_end - syl_frames,
            syl_last_frame=syl_end - 1,
            phone_start=phone_start.astype(np.int64),
            timing_in_phone=timing_matrix(in_phone, TIMING_DIMS["frame"]),
            timing_in_syllable=timing_matrix(in_syl, TIMING_DIMS["frame"]),
        )


# ---------------------------------------------------------------------------
# JSON


def to_document(tree: UtteranceTree, targets: ProsodicTargets | None = None) -> dict:
    if targets is not None:
        tree = tree.with_durations(targets.durations)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "utterance_id": tree.utterance_id,
        "sentence_features": tree.sentence_features.tolist(),
        "words": [
            {
                "features": w.features.tolist(),
                "syllables": [
                    {
                        "features": s.features.tolist(),
                        "phones": [
                            {"features": p.features.tolist(), **(
                                {"duration_frames": int(p.duration_frames)} if p.duration_frames is not None else {})}
                            for p in s.phones
                        ],
                    }
                    for s in w.syllables
                ],
            }
            for w in tree.words
        ],
    }
    if targets is not None:
        doc["targets"] = {"log_f0": targets.log_f0.tolist(), "c0": targets.c0.tolist()}
    return doc


def _vec(obj, where):
    if not isinstance(obj, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in obj):
        raise SchemaError(f"{where}: expected a list of numbers")
    return obj


def _get(obj, key, where, kind=list):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing {key!r}")
    if not isinstance(obj[key], kind):
        raise SchemaError(f"{where}.{key}: wrong type")
    return obj[key]


def from_document(doc: dict) -> tuple[UtteranceTree, ProsodicTargets | None]:
    if not isinstance(doc, dict):
        raise SchemaError("document root must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}")
    uid = _get(doc, "utterance_id", "root", str)
    words = []
    for wi, w in enumerate(_get(doc, "words", "root")):
        syls = []
        for si, s in enumerate(_get(w, "syllables", f"words[{wi}]")):
            phones = []
            for pi, p in enumerate(_get(s, "phones", f"words[{wi}].syllables[{si}]")):
                where = f"words[{wi}].syllables[{si}].phones[{pi}]"
                dur = p.get("duration_frames") if isinstance(p, dict) else None
                if dur is not None and (not isinstance(dur, int) or isinstance(dur, bool)):
                    raise SchemaError(f"{where}.duration_frames: expected integer")
                phones.append(PhoneNode(_vec(_get(p, "features", where), where), dur))
            syls.append(SyllableNode(_vec(_get(s, "features", f"words[{wi}].syllables[{si}]"), "syllable"), phones))
        words.append(WordNode(_vec(_get(w, "features", f"words[{wi}]"), "word"), syls))
    tree = UtteranceTree(_vec(_get(doc, "sentence_features", "root"), "sentence"), words, uid)

    targets = None
    tgt = doc.get("targets")
    if tgt is not None and tree.has_durations:
        targets = ProsodicTargets(
            _vec(_get(tgt, "log_f0", "targets"), "targets.log_f0"),
            _vec(_get(tgt, "c0", "targets"), "targets.c0"),
            tree.durations(),
        )
    return tree, targets


def dumps(tree: UtteranceTree, targets: ProsodicTargets | None = None) -> str:
    return json.dumps(to_document(tree, targets), separators=(",", ":"))


def loads(text: str) -> tuple[UtteranceTree, ProsodicTargets | None]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed JSON: {e}") from e
    return from_document(doc)


def save(path: str | Path, tree: UtteranceTree, targets: ProsodicTargets | None = None) -> None:
    Path(path).write_text(dumps(tree, targets))


def load(path: str | Path) -> tuple[UtteranceTree, ProsodicTargets | None]:
    return loads(Path(path).read_text())


def feature_dims(trees: Iterable[UtteranceTree]) -> dict[str, int]:
    tree = next(iter(trees))
    return {
        "sentence": int(tree.sentence_features.shape[0]),
        "word": int(tree.words[0].features.shape[0]),
        "syllable": int(tree.words[0].syllables[0].features.shape[0]),
        "phone": int(tree.words[0].syllables[0].phones[0].features.shape[0]),
    }
