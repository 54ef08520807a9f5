"""Synthetic utterances whose prosody depends on a hidden per-utterance style.

Linguistic features are random but fully observed; the acoustics add a
global pitch offset and an accent-range scale drawn per utterance and kept
out of the features, so a model can only recover them from the prosody it
encodes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .structure import (UTT_SUFFIX, PhoneNode, ProsodicTargets, SyllableNode, UtteranceTree, WordNode, load,
                        save, validate)

SPEAKER_BASE = (4.6, 4.8, 5.0, 5.2)
DECLINATION = 0.2
OFFSET_GAIN = 0.3
ACCENT_HEIGHT = 0.25
RANGE_GAIN = 0.5
C0_BASE = 0.5
C0_ACCENT = 0.3


@dataclass(frozen=True)
class CorpusConfig:
    utterances: int = 2200
    seed: int = 0
    words: tuple[int, int] = (2, 6)
    syllables_per_word: tuple[int, int] = (1, 4)
    phones_per_syllable: tuple[int, int] = (1, 3)
    duration_frames: tuple[int, int] = (3, 12)
    speakers: int = 4
    phone_inventory: int = 20
    stress_prob: float = 0.3
    prominence_prob: float = 0.3
    noise_scale: float = 0.02

    def __post_init__(self):
        for name in ("words", "syllables_per_word", "phones_per_syllable", "duration_frames"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} range {lo}..{hi} is empty or non-positive")
        if self.utterances < 1 or self.speakers < 1 or self.phone_inventory < 1:
            raise ValueError("counts must be positive")
        if self.speakers > len(SPEAKER_BASE):
            raise ValueError(f"at most {len(SPEAKER_BASE)} speakers")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class StyleFactor:
    z_offset: float
    z_range: float


@dataclass(frozen=True)
class Utterance:
    tree: UtteranceTree
    targets: ProsodicTargets
    style: StyleFactor
    speaker: int

    @property
    def utterance_id(self) -> str:
        return self.tree.utterance_id


def phone_base_duration(phone_id: int, cfg: CorpusConfig) -> int:
    """Fixed per-phone mean duration spread across the configured range."""
    lo, hi = cfg.duration_frames
    span = max(hi - lo - 2, 0)
    return lo + 1 + (phone_id * 7) % (span + 1)


def hann_arch(n: int) -> np.ndarray:
    """Unit-height raised-cosine arch sampled at frame centres."""
    k = np.arange(n) + 0.5
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


def accent_envelope(stressed: np.ndarray, syl_frames: np.ndarray) -> np.ndarray:
    env = []
    for s, n in zip(stressed, syl_frames):
        env.append(hann_arch(int(n)) if s else np.zeros(int(n)))
    return np.concatenate(env)


def render_targets(speaker: int, stressed: np.ndarray, durations: np.ndarray, phone_syl: np.ndarray,
                   style: StyleFactor, noise_scale: float, rng: np.random.Generator) -> ProsodicTargets:
    """Acoustic targets for a fixed structure and style."""
    syl_frames = np.bincount(phone_syl, weights=durations, minlength=len(stressed)).astype(np.int64)
    T = int(durations.sum())
    t = np.arange(T)
    env = accent_envelope(stressed, syl_frames)
    log_f0 = (SPEAKER_BASE[speaker] - DECLINATION * (t / T) + OFFSET_GAIN * style.z_offset
              + (1.0 + RANGE_GAIN * style.z_range) * ACCENT_HEIGHT * env)
    c0 = C0_BASE + C0_ACCENT * env
    if noise_scale > 0:
        log_f0 = log_f0 + rng.normal(0.0, noise_scale, T)
        c0 = c0 + rng.normal(0.0, noise_scale, T)
    return ProsodicTargets(log_f0, c0, durations)


def _one_hot(i: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[i] = 1.0
    return v


def generate_one(cfg: CorpusConfig, rng: np.random.Generator, utterance_id: str,
                 style: StyleFactor | None = None) -> Utterance:
    n_words = int(rng.integers(cfg.words[0], cfg.words[1] + 1))
    speaker = int(rng.integers(cfg.speakers))
    if style is None:
        style = StyleFactor(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
    words, stressed, durations, phone_syl = [], [], [], []
    for wi in range(n_words):
        syls = []
        for _ in range(int(rng.integers(cfg.syllables_per_word[0], cfg.syllables_per_word[1] + 1))):
            stress = bool(rng.random() < cfg.stress_prob)
            phones = []
            for _ in range(int(rng.integers(cfg.phones_per_syllable[0], cfg.phones_per_syllable[1] + 1))):
                pid = int(rng.integers(cfg.phone_inventory))
                d = phone_base_duration(pid, cfg) + int(stress) + int(rng.integers(-1, 2))
                d = int(np.clip(d, *cfg.duration_frames))
                phones.append(PhoneNode(_one_hot(pid, cfg.phone_inventory), d))
                durations.append(d)
                phone_syl.append(len(stressed))
            syls.append(SyllableNode([float(stress)], phones))
            stressed.append(stress)
        position = wi / (n_words - 1) if n_words > 1 else 0.0
        words.append(WordNode([position, float(rng.random() < cfg.prominence_prob)], syls))
    sentence = np.concatenate([_one_hot(speaker, cfg.speakers), [n_words / cfg.words[1]]])
    tree = UtteranceTree(sentence, words, utterance_id)
    targets = render_targets(speaker, np.array(stressed), np.array(durations, dtype=np.int64),
                             np.array(phone_syl), style, cfg.noise_scale, rng)
    return Utterance(tree, targets, style, speaker)


def generate(cfg: CorpusConfig, seed: int | None = None) -> list[Utterance]:
    """Deterministic corpus; utterance k draws from its own derived stream."""
    seed = cfg.seed if seed is None else seed
    return [generate_one(cfg, np.random.default_rng([seed, k]), f"{k:05d}") for k in range(cfg.utterances)]


def split(corpus: list, train_fraction: float, seed: int = 0) -> tuple[list, list]:
    """Disjoint train/eval split, stratified by word count."""
    n = len(corpus)
    n_train = int(round(train_fraction * n))
    if not (0 < n_train < n):
        raise ValueError(f"split of {n} utterances at {train_fraction} leaves an empty side")
    groups: dict[int, list[int]] = {}
    for i, u in enumerate(corpus):
        groups.setdefault(len(u.tree.words), []).append(i)
    keys = sorted(groups)
    quotas = {k: train_fraction * len(groups[k]) for k in keys}
    take = {k: int(np.floor(quotas[k])) for k in keys}
    remaining = n_train - sum(take.values())
    for k in sorted(keys, key=lambda k: (-(quotas[k] - take[k]), k))[:remaining]:
        take[k] += 1
    rng = np.random.default_rng([seed, 7])
    train_idx, eval_idx = [], []
    for k in keys:
        idx = np.array(groups[k])
        idx = idx[rng.permutation(len(idx))]
        train_idx.extend(idx[: take[k]].tolist())
        eval_idx.extend(idx[take[k]:].tolist())
    return [corpus[i] for i in sorted(train_idx)], [corpus[i] for i in sorted(eval_idx)]


def mean_pitch_offset(u: Utterance) -> float:
    return float(np.mean(u.targets.log_f0) - SPEAKER_BASE[u.speaker])


# ---------------------------------------------------------------------------
# directory layout: NNNNN.utt.json, styles.json, manifest.json


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_corpus(directory: str | Path, corpus: list[Utterance], cfg: CorpusConfig, seed: int) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    checksums = {}
    for u in corpus:
        path = directory / f"{u.utterance_id}{UTT_SUFFIX}"
        save(path, u.tree, u.targets)
        checksums[path.name] = _sha256(path)
    styles = {u.utterance_id: {"z_offset": u.style.z_offset, "z_range": u.style.z_range, "speaker": u.speaker}
              for u in corpus}
    (directory / "styles.json").write_text(json.dumps(styles, indent=1, sort_keys=True))
    checksums["styles.json"] = _sha256(directory / "styles.json")
    manifest = {"format": "chive-corpus", "version": 1, "config": cfg.to_dict(), "seed": seed,
                "utterances": len(corpus), "checksums": checksums}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def read_corpus(directory: str | Path, verify: bool = True) -> list[Utterance]:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{directory}: no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    styles_path = directory / "styles.json"
    styles = json.loads(styles_path.read_text()) if styles_path.exists() else {}
    out = []
    for name in sorted(n for n in manifest["checksums"] if n.endswith(UTT_SUFFIX)):
        path = directory / name
        if verify and _sha256(path) != manifest["checksums"][name]:
            raise ValueError(f"{path}: checksum mismatch")
        tree, targets = load(path)
        report = validate(tree, targets)
        if not report.ok or targets is None:
            raise ValueError(f"{path}: invalid utterance {report.codes() or ['missing targets']}")
        s = styles.get(tree.utterance_id)
        style = StyleFactor(s["z_offset"], s["z_range"]) if s else None
        speaker = s["speaker"] if s else int(np.argmax(tree.sentence_features[:-1]))
        out.append(Utterance(tree, targets, style, speaker))
    return out
