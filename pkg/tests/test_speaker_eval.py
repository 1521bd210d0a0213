import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage

from oracles import brute_der, random_segments, seg, sweep_eer
from voxeval.data import FrameEmbeddings
from voxeval.speaker_eval import (ClusteringParams, DiarSegment, EvalError, Trial,
                                  cluster_embeddings, compute_der, compute_eer, counting_mae,
                                  diarize, read_rttm, read_scores, read_trials, score_trials,
                                  speaker_counts, window_bounds, write_rttm, write_scores,
                                  write_trials)


# EER

def test_eer_examples():
    assert compute_eer([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])[0] == 0.0
    eer, _ = compute_eer([0.9, 0.7, 0.6, 0.8, 0.3, 0.2], [1, 1, 1, 0, 0, 0])
    assert round(eer, 2) == 33.33


@pytest.mark.parametrize("seed", range(0, 200))
def test_eer_matches_sweep(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(4, 201))
    labels = r.random(n) < 0.5
    labels[0], labels[1] = True, False
    scores = np.round(r.normal(size=n) + labels * r.random(), int(r.integers(1, 4)))
    assert compute_eer(scores, labels)[0] == sweep_eer(scores, labels)


def test_eer_threshold_sits_between_classes():
    eer, thr = compute_eer([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert 0.2 < thr <= 0.8


def test_eer_same_distribution_near_half():
    r = np.random.default_rng(11)
    scores = r.normal(size=20000)
    labels = np.arange(20000) % 2 == 0
    assert abs(compute_eer(scores, labels)[0] - 50.0) < 2.0


def test_eer_single_class_rejected():
    with pytest.raises(EvalError):
        compute_eer([0.1, 0.2], [1, 1])


# trial scoring

def test_score_trials_and_files(tmp_path):
    recs = {"a": FrameEmbeddings("a", [[1.0, 0.0]]), "b": FrameEmbeddings("b", [[0.0, 2.0]]),
            "c": FrameEmbeddings("c", [[3.0, 0.0]])}
    trials = [Trial("a", "c", True), Trial("a", "b", False)]
    scored = score_trials(recs, trials)
    assert [s for _, s in scored] == [1.0, 0.0]
    assert score_trials(recs, trials, threads=4) == scored
    write_trials(trials, tmp_path / "t.txt")
    assert read_trials(tmp_path / "t.txt") == trials
    write_scores(scored, tmp_path / "s.txt")
    s, l = read_scores(tmp_path / "s.txt")
    assert list(l) == [True, False]
    with pytest.raises(EvalError, match="zz"):
        score_trials(recs, [Trial("a", "zz", True)])


# clustering

def test_cluster_extremes():
    x = np.random.default_rng(0).normal(size=(6, 4))
    assert len(set(cluster_embeddings(x, ClusteringParams(1.999, 1)))) == 1
    assert len(set(cluster_embeddings(x, ClusteringParams(1e-9, 1)))) == 6
    assert set(cluster_embeddings(np.ones((4, 3)), ClusteringParams(0.1, 1))) == {0}


def test_cluster_two_orthogonal_groups():
    r = np.random.default_rng(1)
    a = np.array([1.0, 0, 0, 0]) + 0.01 * r.normal(size=(5, 4))
    b = np.array([0, 1.0, 0, 0]) + 0.01 * r.normal(size=(5, 4))
    labels = cluster_embeddings(np.concatenate([a, b]), ClusteringParams(0.5, 1))
    assert labels.tolist() == [0] * 5 + [1] * 5


@pytest.mark.parametrize("seed", range(20))
def test_cluster_matches_scipy(seed):
    r = np.random.default_rng(seed)
    x = np.concatenate([r.normal(size=(1, 6)) + 0.4 * r.normal(size=(int(r.integers(2, 6)), 6))
                        for _ in range(int(r.integers(2, 5)))])
    thr = float(r.uniform(0.1, 0.9))
    ours = cluster_embeddings(x, ClusteringParams(thr, 1))
    ref = fcluster(linkage(x, method="average", metric="cosine"), t=thr, criterion="distance")
    # compare as partitions
    assert len(set(zip(ours, ref))) == len(set(ours)) == len(set(ref))


def test_cluster_permutation_invariance():
    r = np.random.default_rng(5)
    x = np.concatenate([c + 0.2 * r.normal(size=(4, 5)) for c in r.normal(size=(3, 5))])
    perm = r.permutation(len(x))
    a = cluster_embeddings(x, ClusteringParams(0.4, 1))
    b = cluster_embeddings(x[perm], ClusteringParams(0.4, 1))
    assert len(set(zip(a[perm], b))) == len(set(a)) == len(set(b))


def test_min_cluster_size_reassigns_small_clusters():
    x = np.array([[1.0, 0], [1.0, 0.01], [1.0, -0.01], [0, 1.0]])
    assert len(set(cluster_embeddings(x, ClusteringParams(0.1, 1)))) == 2
    assert len(set(cluster_embeddings(x, ClusteringParams(0.1, 2)))) == 1


def test_clustering_params_validation():
    with pytest.raises(EvalError):
        ClusteringParams(0.0)
    with pytest.raises(EvalError):
        ClusteringParams(0.5, 0)


# diarization

def _two_speaker_session(turn_frames=50, turns=4):
    a, b = np.eye(4)[0], np.eye(4)[1]
    frames = np.concatenate([np.tile(a if i % 2 == 0 else b, (turn_frames, 1)) for i in range(turns)])
    return FrameEmbeddings("s", frames)


def test_diarize_one_speaker():
    segs = diarize(FrameEmbeddings("s", np.ones((100, 3))), 1.0, 0.5, ClusteringParams(0.3, 1))
    assert [(s.start_s, s.end_s) for s in segs] == [(0.0, 4.0)]


def test_diarize_exact_boundaries_when_windows_align():
    segs = diarize(_two_speaker_session(), 1.0, 1.0, ClusteringParams(0.3, 1))
    assert [(s.start_s, s.end_s, s.speaker) for s in segs] == [
        (0.0, 2.0, "spk0"), (2.0, 4.0, "spk1"), (4.0, 6.0, "spk0"), (6.0, 8.0, "spk1")]


def test_diarize_straddling_windows_stay_within_one_window():
    # turns of 1.9 s: windows straddle boundaries
    sess = _two_speaker_session(turn_frames=47)
    segs = diarize(sess, 1.0, 0.5, ClusteringParams(0.3, 1))
    truth = [1.88, 3.76, 5.64]
    found = [s.start_s for s in segs[1:]]
    assert len(found) == 3
    assert all(abs(f - t) <= 1.0 for f, t in zip(found, truth))


def test_diarize_errors_and_windows():
    with pytest.raises(EvalError):
        diarize(FrameEmbeddings("s", np.ones((0, 3))), 1.0, 1.0, ClusteringParams())
    with pytest.raises(EvalError):
        diarize(FrameEmbeddings("s", np.ones((5, 3))), 0.01, 1.0, ClusteringParams())
    assert window_bounds(10, 4, 4) == [(0, 4), (4, 8), (6, 10)]
    assert window_bounds(3, 4, 2) == [(0, 3)]


# DER

def test_der_worked_examples():
    ref = [seg(0, 10, "A")]
    assert compute_der(ref, ref, 0.0)["der"] == 0.0
    r = compute_der(ref, [seg(0, 8, "X")], 0.0)
    assert r["miss"] == 20.0 and r["der"] == 20.0
    ref2 = [seg(0, 5, "A"), seg(5, 10, "B")]
    hyp2 = [seg(0, 5, "X"), seg(5, 8, "Y"), seg(8, 10, "X")]
    r = compute_der(ref2, hyp2, 0.0)
    assert r["confusion"] == 20.0 and r["der"] == 20.0 and r["miss"] == 0.0 and r["fa"] == 0.0


@pytest.mark.parametrize("seed", range(40))
def test_der_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    ref = random_segments(r, ["A", "B", "C"])
    hyp = random_segments(r, ["x", "y", "z", "w"])
    if not ref:
        return
    assert compute_der(ref, hyp, 0.0)["der"] == pytest.approx(brute_der(ref, hyp), abs=1e-9)


@pytest.mark.parametrize("seed", range(100))
def test_der_self_zero_and_rename_invariant(seed):
    r = np.random.default_rng(1000 + seed)
    ref = random_segments(r, ["A", "B"]) or [seg(0, 1, "A")]
    assert compute_der(ref, ref, 0.0)["der"] == 0.0
    hyp = random_segments(r, ["p", "q", "s"])
    renamed = [seg(s.start_s, s.end_s, {"p": "s", "q": "p", "s": "q"}[s.speaker]) for s in hyp]
    a, b = compute_der(ref, hyp, 0.0), compute_der(ref, renamed, 0.0)
    assert a["der"] == b["der"] and a["der"] >= a["confusion"]


def test_der_collar_excludes_boundaries():
    ref = [seg(0, 5, "A"), seg(5, 10, "B")]
    hyp = [seg(0, 5.2, "X"), seg(5.2, 10, "Y")]
    assert compute_der(ref, hyp, 0.0)["der"] > 0
    r = compute_der(ref, hyp, 0.25)
    assert r["der"] == 0.0 and r["scored_time"] == pytest.approx(9.0)  # collars at 0, 5 and 10 s


def test_der_errors():
    with pytest.raises(EvalError):
        compute_der([], [seg(0, 1, "A")])
    with pytest.raises(EvalError):
        compute_der([seg(0, 1, "A")], [seg(0, 1, "A", "other")])
    with pytest.raises(EvalError):
        DiarSegment("x", 2.0, 1.0, "A")


# counting and RTTM

def test_counting_mae():
    assert counting_mae({"a": 2, "b": 4}, {"a": 3, "b": 4}) == 0.5
    assert counting_mae({"a": 2}, {"a": 5}) == 3.0
    with pytest.raises(EvalError):
        counting_mae({"a": 1}, {"b": 1})


def test_rttm_round_trip(tmp_path):
    segs = [seg(0.0, 1.25, "A", "s1"), seg(1.25, 3.5, "B", "s1"), seg(0.0, 2.0, "A", "s2")]
    write_rttm(segs, tmp_path / "x.rttm")
    assert read_rttm(tmp_path / "x.rttm") == segs
    assert speaker_counts(segs) == {"s1": 2, "s2": 1}
