import json

import numpy as np
import pytest

from chive.corpus import (DECLINATION, SPEAKER_BASE, CorpusConfig, StyleFactor, generate, generate_one,
                          mean_pitch_offset, read_corpus, split, write_corpus)
from chive.structure import validate


def test_generation_is_deterministic():
    cfg = CorpusConfig(utterances=6, seed=3)
    a, b = generate(cfg), generate(cfg)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u.targets.log_f0, v.targets.log_f0)
        np.testing.assert_array_equal(u.targets.durations, v.targets.durations)
        assert u.style == v.style and u.tree.utterance_id == v.tree.utterance_id
    assert not np.array_equal(generate(CorpusConfig(utterances=1, seed=4))[0].targets.log_f0, a[0].targets.log_f0)


def test_declination_only_case():
    cfg = CorpusConfig(utterances=1, noise_scale=0.0, stress_prob=0.0)
    u = generate_one(cfg, np.random.default_rng(0), "x", StyleFactor(0.0, 0.0))
    T = u.targets.num_frames
    expected = SPEAKER_BASE[u.speaker] - DECLINATION * np.arange(T) / T
    np.testing.assert_allclose(u.targets.log_f0, expected, atol=1e-15)
    np.testing.assert_allclose(u.targets.c0, 0.5, atol=1e-15)


def test_offset_difference_for_identical_structure():
    cfg = CorpusConfig(utterances=1)
    hi = generate_one(cfg, np.random.default_rng(11), "a", StyleFactor(1.0, 0.2))
    lo = generate_one(cfg, np.random.default_rng(11), "b", StyleFactor(-1.0, 0.2))
    np.testing.assert_array_equal(hi.targets.durations, lo.targets.durations)
    diff = hi.targets.log_f0.mean() - lo.targets.log_f0.mean()
    assert diff == pytest.approx(0.6, abs=1e-9)


def test_style_is_recoverable_from_pitch():
    corpus = generate(CorpusConfig(utterances=400, seed=2, noise_scale=0.02))
    z = np.array([u.style.z_offset for u in corpus])
    y = np.array([mean_pitch_offset(u) for u in corpus])
    r2 = np.corrcoef(z, y)[0, 1] ** 2  # simple regression: R^2 = r^2
    assert r2 > 0.9


def test_every_utterance_validates(small_corpus):
    for u in small_corpus:
        assert validate(u.tree, u.targets).ok


def test_style_never_enters_features():
    cfg = CorpusConfig(utterances=1)
    a = generate_one(cfg, np.random.default_rng(5), "a", StyleFactor(0.9, -0.4))
    b = generate_one(cfg, np.random.default_rng(5), "a", StyleFactor(-0.3, 0.8))
    np.testing.assert_array_equal(a.tree.sentence_features, b.tree.sentence_features)
    for wa, wb in zip(a.tree.words, b.tree.words):
        np.testing.assert_array_equal(wa.features, wb.features)
    for sa, sb in zip(a.tree.syllables, b.tree.syllables):
        np.testing.assert_array_equal(sa.features, sb.features)


def test_ranges_respected():
    cfg = CorpusConfig(utterances=50, words=(1, 3), duration_frames=(2, 5))
    for u in generate(cfg):
        assert 1 <= len(u.tree.words) <= 3
        assert u.targets.durations.min() >= 2 and u.targets.durations.max() <= 5


@pytest.mark.parametrize("kw", [dict(words=(0, 3)), dict(words=(4, 3)), dict(utterances=0), dict(speakers=5),
                                dict(noise_scale=-1.0)])
def test_bad_config(kw):
    with pytest.raises(ValueError):
        CorpusConfig(**kw)


def test_split_sizes_and_disjointness():
    corpus = generate(CorpusConfig(utterances=1000, words=(1, 3), syllables_per_word=(1, 1),
                                   phones_per_syllable=(1, 1)))
    train, ev = split(corpus, 0.9, seed=0)
    assert (len(train), len(ev)) == (900, 100)
    ids_t = {u.utterance_id for u in train}
    ids_e = {u.utterance_id for u in ev}
    assert not ids_t & ids_e and ids_t | ids_e == {u.utterance_id for u in corpus}
    again = split(corpus, 0.9, seed=0)
    assert [u.utterance_id for u in again[1]] == [u.utterance_id for u in ev]
    assert [u.utterance_id for u in split(corpus, 0.9, seed=1)[1]] != [u.utterance_id for u in ev]


def test_split_is_stratified():
    corpus = generate(CorpusConfig(utterances=300, words=(1, 3), syllables_per_word=(1, 1)))
    train, ev = split(corpus, 0.8)
    for k in (1, 2, 3):
        total = sum(len(u.tree.words) == k for u in corpus)
        n_ev = sum(len(u.tree.words) == k for u in ev)
        assert abs(n_ev - 0.2 * total) <= 1


@pytest.mark.parametrize("frac", [0.0, 1.0, 0.001])
def test_degenerate_split(small_corpus, frac):
    with pytest.raises(ValueError):
        split(small_corpus, frac)


def test_directory_round_trip(tmp_path, small_corpus):
    cfg = CorpusConfig(utterances=len(small_corpus), seed=5)
    write_corpus(tmp_path, small_corpus, cfg, 5)
    back = read_corpus(tmp_path)
    assert [u.utterance_id for u in back] == [u.utterance_id for u in small_corpus]
    for u, v in zip(back, small_corpus):
        np.testing.assert_array_equal(u.targets.log_f0, v.targets.log_f0)
        assert u.style == v.style and u.speaker == v.speaker
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 5 and CorpusConfig.from_dict(manifest["config"]) == cfg


def test_read_order_ignores_manifest_order(tmp_path, small_corpus):
    write_corpus(tmp_path, small_corpus, CorpusConfig(utterances=len(small_corpus), seed=5), 5)
    mpath = tmp_path / "manifest.json"
    m = json.loads(mpath.read_text())
    m["checksums"] = dict(reversed(list(m["checksums"].items())))
    mpath.write_text(json.dumps(m))
    assert [u.utterance_id for u in read_corpus(tmp_path)] == [u.utterance_id for u in small_corpus]


def test_checksum_mismatch_detected(tmp_path, small_corpus):
    write_corpus(tmp_path, small_corpus[:2], CorpusConfig(utterances=2, seed=5), 5)
    path = tmp_path / f"{small_corpus[0].utterance_id}.utt.json"
    path.write_text(path.read_text() + " ")
    with pytest.raises(ValueError, match="checksum"):
        read_corpus(tmp_path)
    assert len(read_corpus(tmp_path, verify=False)) == 2


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_corpus(tmp_path)
