"""Encoder/decoder structure: clocking, resets, unroll lengths, sensitivity."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chive.autodiff import no_grad
from chive.decoder import DurationMode, round_duration, round_durations
from chive.model import ModelConfig, build_model
from chive.structure import ProsodicTargets
from conftest import make_targets, make_tree

DIMS = {"sentence": 3, "word": 2, "syllable": 1, "phone": 4}


@pytest.fixture(scope="module")
def model():
    return build_model(ModelConfig(DIMS, hidden=8, embedding=6), seed=1)


@pytest.fixture(scope="module")
def baseline():
    return build_model(ModelConfig(DIMS, kind="baseline", hidden=8, embedding=6), seed=1)


shapes = st.lists(st.lists(st.integers(1, 3), min_size=1, max_size=4), min_size=1, max_size=6)


def tree_and_targets(shape, rng):
    n = sum(sum(s) for s in shape)
    d = rng.integers(1, 6, n)
    return make_tree(shape, DIMS_T, durations=d), make_targets(d, int(rng.integers(1 << 30)))


DIMS_T = (DIMS["sentence"], DIMS["word"], DIMS["syllable"], DIMS["phone"])


# encoder ------------------------------------------------------------------


def test_single_syllable_encoder_counts(model):
    tree = make_tree([[1]], DIMS_T, durations=[7])
    _, tr = model.encode(tree, make_targets([7]))
    assert (tr.frame_steps, tr.frame_captures, tr.phone_steps, tr.phone_captures, tr.syllable_steps) == (7, 1, 1, 1, 1)


def test_two_word_encoder_resets(model):
    # first syllable two phones, second one phone: the phone stack restarts at phone 2
    tree = make_tree([[2], [1]], DIMS_T, durations=[2, 3, 4])
    _, tr = model.encode(tree, make_targets([2, 3, 4]))
    assert tr.phone_captures == 2 and tr.frame_captures == 2
    assert tr.phone_resets == 2 and tr.frame_resets == 2


@given(shapes, st.integers(0, 2**31))
def test_capture_count_equals_syllables(model, shape, seed):
    tree, targets = tree_and_targets(shape, np.random.default_rng(seed))
    _, tr = model.encode(tree, targets)
    S = len(tree.syllables)
    assert tr.frame_captures == tr.phone_captures == tr.syllable_steps == S


def test_frame_order_matters(model):
    tree = make_tree([[3]], DIMS_T, durations=[2, 3, 4])
    t = make_targets([2, 3, 4])
    perm = np.random.default_rng(0).permutation(9)
    t2 = ProsodicTargets(t.log_f0[perm], t.c0[perm], t.durations)
    a = model.posterior(tree, t).mu.value
    b = model.posterior(tree, t2).mu.value
    assert not np.allclose(a, b)


def test_frame_stack_state_resets_between_syllables(model):
    tree = make_tree([[2, 1, 2]], DIMS_T, durations=[2, 3, 4, 2, 3])
    t = make_targets([2, 3, 4, 2, 3])
    lf0 = t.log_f0.copy()
    lf0[:5] += 1.0  # only the first syllable's frames
    _, a = model.encode(tree, t)
    _, b = model.encode(tree, ProsodicTargets(lf0, t.c0, t.durations))
    assert not np.allclose(a.frame_capture_values[0], b.frame_capture_values[0])
    np.testing.assert_array_equal(a.frame_capture_values[1:], b.frame_capture_values[1:])
    np.testing.assert_array_equal(a.phone_capture_values, b.phone_capture_values)


def test_word_features_broadcast_to_syllables(model):
    tree = make_tree([[1, 2, 1], [2]], DIMS_T, durations=[2] * 6)
    _, tr = model.encode(tree, make_targets([2] * 6))
    H = model.config.hidden
    word_cols = slice(2 * H + DIMS["syllable"], 2 * H + DIMS["syllable"] + DIMS["word"])
    x = tr.syllable_inputs
    for s in range(3):
        np.testing.assert_array_equal(x[s, word_cols], tree.words[0].features)
    np.testing.assert_array_equal(x[3, word_cols], tree.words[1].features)


def test_encoder_needs_targets(model):
    with pytest.raises(ValueError):
        model.encode(make_tree([[1]], DIMS_T, durations=[2]), None)


# decoder ------------------------------------------------------------------


def test_round_duration_examples():
    assert round_duration(0.2) == 1
    assert round_duration(2.5) == 3
    assert round_duration(-3.0) == 1
    assert round_duration(3.5) == 4 and round_duration(1.49) == 1
    np.testing.assert_array_equal(round_durations([1.6, 3.7]), [2, 4])
    with pytest.raises(ValueError):
        round_duration(float("nan"))


def test_syllable_unroll_sums_phone_durations(model):
    tree = make_tree([[2]], DIMS_T, durations=[2, 4])
    with no_grad():
        pred = model.decode(tree, np.zeros(6), DurationMode.TEACHER_FORCED)
    assert pred.trace.c0_unrolls == [2, 4]
    assert pred.trace.f0_unrolls == [6]
    assert pred.num_frames == 6 and pred.c0.shape == (6,)


@given(shapes, st.integers(0, 2**31))
def test_length_invariants(model, shape, seed):
    rng = np.random.default_rng(seed)
    tree, targets = tree_and_targets(shape, rng)
    emb = rng.standard_normal(6)
    with no_grad():
        tf = model.decode(tree, emb, DurationMode.TEACHER_FORCED)
        fr = model.decode(tree.without_durations(), emb, DurationMode.FREE_RUNNING)
    assert tf.num_frames == targets.num_frames
    np.testing.assert_array_equal(tf.durations_realized, targets.durations)
    assert fr.num_frames == int(round_durations(fr.durations_raw.value).sum())
    for pred in (tf, fr):
        assert pred.trace.c0_steps == pred.num_frames == pred.trace.f0_steps
        fl = tree.layout().frames(pred.durations_realized)
        np.testing.assert_array_equal(pred.trace.f0_unrolls, fl.syl_frames)


def test_teacher_forced_needs_durations(model):
    with pytest.raises(ValueError):
        model.decode(make_tree([[1]], DIMS_T), np.zeros(6), DurationMode.TEACHER_FORCED)


def test_embedding_shape_checked(model):
    with pytest.raises(ValueError):
        model.decode(make_tree([[1]], DIMS_T, durations=[2]), np.zeros(5))


def test_decoder_is_sensitive_to_embedding(model):
    tree = make_tree([[2, 1], [1]], DIMS_T, durations=[3, 2, 4, 3])
    rng = np.random.default_rng(0)
    with no_grad():
        a = model.decode(tree, rng.standard_normal(6)).log_f0.value
        b = model.decode(tree, rng.standard_normal(6)).log_f0.value
    assert not np.allclose(a, b)


def test_prediction_serialisation():
    tree = make_tree([[2]], DIMS_T, durations=[2, 3])
    m = build_model(ModelConfig(DIMS, hidden=4, embedding=2), 0)
    with no_grad():
        pred = m.decode(tree, np.zeros(2))
    lines = pred.contour_csv().splitlines()
    assert lines[0] == "frame_ms,log_f0,c0" and len(lines) == 6
    assert lines[2].startswith("5,")
    dur = pred.duration_csv().splitlines()
    assert dur[0].startswith("phone,start_ms") and dur[2].split(",")[1] == "10"
    d = pred.to_dict()
    assert d["durations_realized"] == [2, 3] and len(d["log_f0"]) == 5


# baseline -----------------------------------------------------------------


def test_baseline_encoder_steps_every_frame(baseline):
    tree = make_tree([[2], [1]], DIMS_T, durations=[2, 3, 4])
    _, tr = baseline.encode(tree, make_targets([2, 3, 4]))
    assert tr.frame_steps == 9


def test_baseline_zero_projection_is_prior():
    m = build_model(ModelConfig(DIMS, kind="baseline", hidden=4, embedding=256), 0)
    for name in ("variational.proj.weight", "variational.proj.bias"):
        m.store[name].value[...] = 0.0
    p = m.posterior(make_tree([[1]], DIMS_T, durations=[3]), make_targets([3]))
    assert p.dim == 256
    np.testing.assert_array_equal(p.mu.value, 0.0)
    np.testing.assert_array_equal(p.sigma, 1.0)


@given(shapes, st.integers(0, 2**31))
def test_baseline_lengths_match_hierarchical(model, baseline, shape, seed):
    rng = np.random.default_rng(seed)
    tree, targets = tree_and_targets(shape, rng)
    emb = rng.standard_normal(6)
    with no_grad():
        a = model.decode(tree, emb)
        b = baseline.decode(tree, emb)
        fr = baseline.decode(tree.without_durations(), emb, DurationMode.FREE_RUNNING)
    assert a.num_frames == b.num_frames == targets.num_frames
    np.testing.assert_array_equal(fr.durations_realized, round_durations(fr.durations_raw.value))
    assert fr.num_frames == fr.durations_realized.sum()


def test_baseline_free_running_matches_teacher_forced_on_same_durations(baseline):
    # feeding the free-run durations back teacher-forced must reproduce the same contour
    tree = make_tree([[2, 1], [2]], DIMS_T)
    emb = np.random.default_rng(3).standard_normal(6)
    with no_grad():
        fr = baseline.decode(tree, emb, DurationMode.FREE_RUNNING)
        tf = baseline.decode(tree, emb, DurationMode.TEACHER_FORCED, fr.durations_realized)
    np.testing.assert_allclose(fr.log_f0.value, tf.log_f0.value, atol=1e-12)
    np.testing.assert_allclose(fr.durations_raw.value, tf.durations_raw.value, atol=1e-12)


def test_hierarchical_free_running_matches_teacher_forced_on_same_durations(model):
    tree = make_tree([[2, 1], [2]], DIMS_T)
    emb = np.random.default_rng(3).standard_normal(6)
    with no_grad():
        fr = model.decode(tree, emb, DurationMode.FREE_RUNNING)
        tf = model.decode(tree, emb, DurationMode.TEACHER_FORCED, fr.durations_realized)
    np.testing.assert_allclose(fr.log_f0.value, tf.log_f0.value, atol=1e-12)
