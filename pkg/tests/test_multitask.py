import math

import numpy as np
import pytest

from voxeval.data import FrameEmbeddings, UtteranceRecord, mean_pool
from voxeval.multitask import (Adaptor, Batch, MultitaskConfig, MultitaskError, MultitaskResult,
                               PseudoLabelPolicy, TaskHeadSet, ToyEncoder, adaptor_forward,
                               encoder_forward, ge2e_loss, group_frames, margin_softmax_batch,
                               multitask_loss, multitask_train, pseudo_label, stack_frames,
                               training_accuracy, write_trace_csv)
from voxeval.probe import ProbeHead
from voxeval.synth import SynthConfig, generate_corpus


def test_identity_encoder_preserves_pooling():
    fe = FrameEmbeddings("a", np.abs(np.random.default_rng(0).normal(size=(5, 3))))
    out = encoder_forward(fe, ToyEncoder.identity(3))
    assert np.allclose(mean_pool(out), mean_pool(fe), atol=1e-6)


def test_downsampling_groups_and_masks():
    X = np.arange(10.0).reshape(1, 5, 2)
    mask = np.array([[True, True, True, False, False]])
    g, counts = group_frames(X, mask, 2)
    assert counts.tolist() == [[2, 1, 0]]
    assert np.allclose(g[0, 1], X[0, 2]) and np.allclose(g[0, 2], 0)
    enc = ToyEncoder.init(2, 4, 3, downsample=2)
    out = encoder_forward(FrameEmbeddings("a", X[0], mask[0]), enc)
    assert out.n_frames == 3 and out.valid_mask.tolist() == [True, True, False]
    assert out.frame_rate_hz == 12.5
    with pytest.raises(MultitaskError):
        encoder_forward(np.ones((3, 5)), enc)


def test_margin_increases_loss_and_validates():
    r = np.random.default_rng(1)
    E = r.normal(size=(4, 5))
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    W = r.normal(size=(3, 5))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    y = [0, 1, 2, 0]
    l0 = margin_softmax_batch(E, W, y, 0.0, 10.0)[0]
    l1 = margin_softmax_batch(E, W, y, 0.3, 10.0)[0]
    assert l1 > l0
    with pytest.raises(MultitaskError):
        margin_softmax_batch(E * 2, W, y)
    with pytest.raises(MultitaskError):
        margin_softmax_batch(E, W, y, margin=2.0)


def test_ge2e_separated_speakers_score_better():
    r = np.random.default_rng(2)
    c = np.eye(4)[:3] * 5
    tight = [c[k] + 0.05 * r.normal(size=(4, 4)) for k in range(3)]
    mixed = [r.normal(size=(4, 4)) for _ in range(3)]
    assert ge2e_loss(tight)[0] < ge2e_loss(mixed)[0]
    with pytest.raises(MultitaskError):
        ge2e_loss([tight[0]])
    with pytest.raises(MultitaskError):
        ge2e_loss([tight[0][:1], tight[1]])


def test_head_set_and_policy_validation():
    h = {"sid": ProbeHead.zeros(2, ["a"], "sid")}
    with pytest.raises(MultitaskError):
        TaskHeadSet(h, {"sid": 0.0})
    with pytest.raises(MultitaskError):
        TaskHeadSet(h, {"sid": 1.0, "age": -1.0})
    with pytest.raises(MultitaskError):
        PseudoLabelPolicy(1.5)


def test_pseudo_label_threshold():
    head = ProbeHead(np.array([[10.0, -10.0]]), np.zeros(2), "gender", ["m", "f"])
    assert pseudo_label(FrameEmbeddings("a", [[1.0]]), head, PseudoLabelPolicy(0.9)) == 0
    assert pseudo_label(FrameEmbeddings("a", [[0.0]]), head, PseudoLabelPolicy(0.9)) is None


def test_unlabeled_rejected_unless_allowed():
    enc = ToyEncoder.init(2, 3, 2)
    heads = TaskHeadSet({"gender": ProbeHead.zeros(2, ["m", "f"], "gender")}, {"gender": 1.0})
    batch = Batch(np.ones((2, 3, 2)), np.ones((2, 3), dtype=bool), {"gender": np.array([0, -1])})
    with pytest.raises(MultitaskError):
        multitask_loss(batch, enc, heads)
    loss, _, per = multitask_loss(batch, enc, heads, allow_unlabeled=True)
    assert loss == pytest.approx(math.log(2))


def _corpus():
    return generate_corpus(SynthConfig(n_speakers=8, utts_per_speaker=8, dim=8, frames_per_utt=4,
                                       noise_sigma=0.2, seed=3))


@pytest.mark.parametrize("sid_loss", ["ce", "margin", "ge2e"])
def test_training_runs_deterministically(sid_loss, tmp_path):
    c = _corpus()
    cfg = MultitaskConfig(epochs=3, hidden=16, sid_loss=sid_loss, ge2e_speakers=4, ge2e_utts=2)
    a = multitask_train(c.records, c.manifest, cfg)
    b = multitask_train(c.records, c.manifest, cfg)
    assert [r["loss"] for r in a.trace] == [r["loss"] for r in b.trace]
    a.save(tmp_path / "m")
    back = MultitaskResult.load(tmp_path / "m")
    assert np.allclose(back.encoder.W1, a.encoder.W1, atol=1e-6)
    acc = training_accuracy(a, c.records, c.manifest)
    assert ("sid" in acc) == (sid_loss != "ge2e")
    write_trace_csv(a.trace, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().startswith("step,loss,sid")


def test_training_learns_attributes():
    c = _corpus()
    res = multitask_train(c.records, c.manifest, MultitaskConfig(epochs=40, hidden=32))
    acc = training_accuracy(res, c.records, c.manifest)
    assert acc["gender"] == 100.0 and acc["age"] == 100.0


def test_pseudo_labels_fill_missing():
    c = _corpus()
    man = [UtteranceRecord(m.utt_id, m.speaker_id, m.age_bin,
                           m.gender if i % 3 else None, m.emotion, m.emotion_set)
           for i, m in enumerate(c.manifest)]
    cfg = MultitaskConfig(epochs=80, hidden=16, pseudo_labels=True, confidence_threshold=0.9)
    res = multitask_train(c.records, man, cfg)
    # scored against the full labels, including the hidden third
    assert training_accuracy(res, c.records, c.manifest)["gender"] == 100.0
    with pytest.raises(MultitaskError):
        multitask_train(c.records, man, MultitaskConfig(epochs=1, hidden=8))


def test_stack_frames_zero_pads():
    H = np.arange(10.0).reshape(5, 2)
    S = stack_frames(H, 4)
    assert S.shape == (2, 8)
    assert np.array_equal(S[1], [8, 9, 0, 0, 0, 0, 0, 0])
    A = stack_frames(H, 4, "average")
    assert np.allclose(A[1], [8, 9])


def test_adaptor_shapes_and_save(tmp_path):
    ad = Adaptor.init(3, 8, 5, factor=4, seed=1)
    out = adaptor_forward(FrameEmbeddings("a", np.ones((9, 3))), ad)
    assert out.shape == (3, 5)
    ad.save(tmp_path / "ad")
    back = Adaptor.load(tmp_path / "ad")
    assert back.factor == 4 and np.allclose(back.W1, ad.W1, atol=1e-6)
    with pytest.raises(MultitaskError):
        adaptor_forward(np.ones((4, 2)), ad)
