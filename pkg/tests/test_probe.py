import numpy as np
import pytest

from voxeval.data import FrameEmbeddings, UtteranceRecord
from voxeval.probe import (ProbeError, ProbeHead, predict, probe_eval, probe_forward, probe_loss,
                           probe_train)
from voxeval.synth import SynthConfig, generate_corpus


def test_forward_equals_pooled_affine():
    r = np.random.default_rng(0)
    fe = FrameEmbeddings("a", r.normal(size=(6, 4)), [True] * 5 + [False])
    head = ProbeHead(r.normal(size=(4, 3)), r.normal(size=3), "age", ["a", "b", "c"])
    pooled = fe.frames[:5].astype(np.float64).mean(axis=0)
    assert np.allclose(probe_forward(fe, head), pooled @ head.W + head.b)


def test_zero_head_gives_uniform_loss():
    loss, dW, db = probe_loss(np.ones((4, 3)), np.array([0, 1, 2, 0]), np.zeros((3, 3)), np.zeros(3))
    assert loss == pytest.approx(np.log(3))


@pytest.mark.parametrize("task", ["sid", "gender", "age", "emotion"])
def test_noise_free_probe_is_perfect(task):
    c = generate_corpus(SynthConfig(n_speakers=8, utts_per_speaker=12, dim=16, frames_per_utt=4,
                                    noise_sigma=0.0, seed=2))
    res = probe_train(c.records, c.manifest, task, epochs=200)
    assert res.loss_trace[-1] < res.loss_trace[0]
    assert probe_eval(c.records, c.manifest, res.head) == 100.0


def test_training_is_seeded():
    c = generate_corpus(SynthConfig(n_speakers=4, utts_per_speaker=4, dim=4, frames_per_utt=3))
    a = probe_train(c.records, c.manifest, "gender", epochs=3, seed=1)
    b = probe_train(c.records, c.manifest, "gender", epochs=3, seed=1)
    assert np.array_equal(a.head.W, b.head.W)


def test_unknown_labels_count_as_errors_and_save_load(tmp_path):
    recs = [FrameEmbeddings("a", [[1.0, 0.0]]), FrameEmbeddings("b", [[0.0, 1.0]])]
    head = ProbeHead(np.eye(2), np.zeros(2), "sid", ["s1", "s2"])
    man = [UtteranceRecord("a", "s1"), UtteranceRecord("b", "s9")]
    assert probe_eval(recs, man, head) == 50.0
    assert predict(recs, head).tolist() == [0, 1]
    head.save(tmp_path / "h")
    back = ProbeHead.load(tmp_path / "h")
    assert back.classes == ["s1", "s2"] and np.array_equal(back.W, head.W)


def test_errors():
    with pytest.raises(ProbeError):
        probe_forward(FrameEmbeddings("a", np.ones((2, 3))), ProbeHead.zeros(4, ["x"], "sid"))
    with pytest.raises(ProbeError):
        probe_train([FrameEmbeddings("a", np.ones((2, 3)))], [UtteranceRecord("a")], "sid")
    with pytest.raises(ProbeError):
        ProbeHead(np.zeros((2, 3)), np.zeros(2))
