"""Clip scoring, majority voting, aggregation, model card IO."""

import itertools

import numpy as np
import pytest

from carovd.classify import (
    AggregationPolicy,
    ClipPrediction,
    Label,
    ModelHandle,
    ModelKind,
    aggregate_individual,
    clip_features,
    label_from_prob,
    load_model,
    predict_clip,
    read_prediction_dump,
    save_model,
    train_builtin,
    vote_video,
    write_prediction_dump,
)
from carovd.errors import (
    EmptyPredictionSet,
    EmptySet,
    MixedVideoIds,
    ModelLoadError,
    NotNormalized,
    SingleClassDataset,
)
from carovd.sampling import ClipIndexPlan, ClipTensor, NormStats

UNIT_STATS = NormStats((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def plan(video_id="v0", seed=0):
    return ClipIndexPlan(
        video_id=video_id, start_frame=0, frame_indices=tuple(range(16)), seed=seed
    )


def norm_clip(data, video_id="v0"):
    return ClipTensor(data=data.astype(np.float32), normalized=True, plan=plan(video_id))


def noise_clip(rng, scale, offset=0.5, video_id="v0"):
    data = offset + scale * (rng.random((16, 224, 224, 3), dtype=np.float32) - 0.5)
    return norm_clip(data, video_id)


def zero_weight_handle():
    return ModelHandle(
        model_id="zero",
        kind=ModelKind.BUILTIN_LINEAR,
        norm_stats=UNIT_STATS,
        artifact_path=None,
        payload={
            "weights": [0.0] * 12,
            "bias": 0.0,
            "feature_mean": [0.0] * 12,
            "feature_std": [1.0] * 12,
        },
    )


class TestPredictBuiltin:
    def test_zero_weights_give_half_and_high_label(self, rng):
        pred = predict_clip(zero_weight_handle(), noise_clip(rng, 0.1))
        assert pred.prob_high_vd == 0.5
        assert pred.label is Label.HIGH_VD  # >= 0.5 rule

    def test_mean_intensity_monotonicity(self, rng):
        handle = zero_weight_handle()
        handle.payload["weights"] = [1.0, 1.0, 1.0] + [0.0] * 9
        bright = norm_clip(np.full((16, 224, 224, 3), 0.8, dtype=np.float32))
        dark = norm_clip(np.full((16, 224, 224, 3), 0.1, dtype=np.float32))
        assert (
            predict_clip(handle, bright).prob_high_vd
            > predict_clip(handle, dark).prob_high_vd
        )

    def test_bias_shift_monotone(self, rng):
        base = zero_weight_handle()
        base.payload["weights"] = list(np.linspace(-1, 1, 12))
        shifted = zero_weight_handle()
        shifted.payload["weights"] = base.payload["weights"]
        shifted.payload["bias"] = 2.0
        for _ in range(5):
            clip = noise_clip(rng, 0.4)
            assert (
                predict_clip(shifted, clip).prob_high_vd
                > predict_clip(base, clip).prob_high_vd
            )

    def test_unnormalized_clip_rejected(self, rng):
        clip = ClipTensor(
            data=np.zeros((16, 224, 224, 3), dtype=np.float32),
            normalized=False,
            plan=plan(),
        )
        with pytest.raises(NotNormalized):
            predict_clip(zero_weight_handle(), clip)


class TestTrainBuiltin:
    def _separable_clips(self, rng, n_per_class=12):
        clips = []
        for _ in range(n_per_class):
            clips.append((noise_clip(rng, 0.1), 0))
            clips.append((noise_clip(rng, 0.6), 1))
        return clips

    def test_separable_training_accuracy(self, rng):
        clips = self._separable_clips(rng)
        handle = train_builtin(clips, epochs=300, lr=1.0, seed=0)
        correct = sum(
            1
            for clip, lbl in clips
            if (predict_clip(handle, clip).label is Label.HIGH_VD) == bool(lbl)
        )
        assert correct / len(clips) >= 0.95

    def test_no_signal_near_chance(self, rng):
        # identical feature vectors for both classes: each clip appears twice
        # with opposite labels, so any deterministic predictor scores 0.5
        base = [noise_clip(rng, 0.3) for _ in range(10)]
        clips = [(c, 0) for c in base] + [(c, 1) for c in base]
        handle = train_builtin(clips, epochs=200, lr=0.5, seed=1)
        correct = sum(
            1
            for clip, lbl in clips
            if (predict_clip(handle, clip).label is Label.HIGH_VD) == bool(lbl)
        )
        assert abs(correct / len(clips) - 0.5) <= 0.05

    def test_same_seed_identical_weights(self, rng):
        clips = self._separable_clips(rng, n_per_class=6)
        a = train_builtin(clips, epochs=50, lr=1.0, seed=7)
        b = train_builtin(clips, epochs=50, lr=1.0, seed=7)
        assert a.payload == b.payload

    def test_single_class_rejected(self, rng):
        with pytest.raises(SingleClassDataset):
            train_builtin([(noise_clip(rng, 0.1), 1)], epochs=10)


def clip_pred(prob, video_id="v0"):
    return ClipPrediction(
        plan=plan(video_id), prob_high_vd=prob, label=label_from_prob(prob), model_id="m"
    )


class TestVoteVideo:
    def test_strict_majority(self):
        v = vote_video([clip_pred(0.9), clip_pred(0.8), clip_pred(0.1)])
        assert v.votes_high == 2
        assert v.label is Label.HIGH_VD

    def test_tie_broken_by_mean_prob(self):
        v = vote_video([clip_pred(0.9), clip_pred(0.2)])
        assert v.votes_high == 1
        assert v.mean_prob == pytest.approx(0.55)
        assert v.label is Label.HIGH_VD

    def test_single_low_clip(self):
        v = vote_video([clip_pred(0.3)])
        assert v.label is Label.LOW_VD

    def test_tie_below_half_goes_low(self):
        v = vote_video([clip_pred(0.6), clip_pred(0.2)])
        assert v.mean_prob == pytest.approx(0.4)
        assert v.label is Label.LOW_VD

    def test_empty_rejected(self):
        with pytest.raises(EmptyPredictionSet):
            vote_video([])

    def test_mixed_videos_rejected(self):
        with pytest.raises(MixedVideoIds):
            vote_video([clip_pred(0.9, "a"), clip_pred(0.8, "b")])

    def test_permutation_invariance_exhaustive(self):
        probs_by_label = {0: 0.2, 1: 0.8}
        for n in range(1, 8):
            for labels in itertools.product((0, 1), repeat=n):
                preds = [clip_pred(probs_by_label[l]) for l in labels]
                base = vote_video(preds)
                for perm in itertools.permutations(preds):
                    v = vote_video(list(perm))
                    assert v.label is base.label
                    assert v.mean_prob == base.mean_prob
                if n > 5:
                    break  # full permutation set only for small n

    def test_monotonicity_exhaustive(self):
        probs_by_label = {0: 0.2, 1: 0.8}
        for n in range(1, 8):
            for labels in itertools.product((0, 1), repeat=n):
                before = vote_video([clip_pred(probs_by_label[l]) for l in labels])
                for i, l in enumerate(labels):
                    if l == 0:
                        flipped = list(labels)
                        flipped[i] = 1
                        after = vote_video(
                            [clip_pred(probs_by_label[f]) for f in flipped]
                        )
                        assert not (
                            before.label is Label.HIGH_VD and after.label is Label.LOW_VD
                        )


class TestAggregateIndividual:
    def _vp(self, mean_prob, video_id="v"):
        return vote_video([clip_pred(mean_prob, video_id)])

    def test_majority_of_videos(self):
        agg = aggregate_individual(
            [self._vp(0.9, "a"), self._vp(0.8, "b"), self._vp(0.2, "c")], "ind"
        )
        assert agg.label is Label.HIGH_VD

    def test_single_video_identity(self):
        agg = aggregate_individual([self._vp(0.2, "a")], "ind")
        assert agg.label is Label.LOW_VD

    def test_tie_by_mean_of_means(self):
        # (HighVD 0.6, LowVD 0.3) -> mean 0.45 -> LowVD
        agg = aggregate_individual([self._vp(0.6, "a"), self._vp(0.3, "b")], "ind")
        assert agg.mean_prob == pytest.approx(0.45)
        assert agg.label is Label.LOW_VD

    def test_mean_prob_policy(self):
        agg = aggregate_individual(
            [self._vp(0.95, "a"), self._vp(0.4, "b"), self._vp(0.4, "c")],
            "ind",
            policy=AggregationPolicy.MEAN_PROB,
        )
        assert agg.label is Label.HIGH_VD  # mean 0.583 despite 2:1 low votes

    def test_empty_rejected(self):
        with pytest.raises(EmptySet):
            aggregate_individual([], "ind")


class TestModelCardIO:
    def test_builtin_roundtrip(self, tmp_path, rng):
        clips = [(noise_clip(rng, 0.1), 0), (noise_clip(rng, 0.6), 1)] * 4
        handle = train_builtin(clips, epochs=50, seed=0)
        card = save_model(handle, tmp_path)
        loaded = load_model(card)
        assert loaded.model_id == handle.model_id
        assert loaded.kind is ModelKind.BUILTIN_LINEAR
        clip = noise_clip(rng, 0.6)
        assert predict_clip(loaded, clip).prob_high_vd == pytest.approx(
            predict_clip(handle, clip).prob_high_vd, abs=1e-12
        )

    def test_missing_card(self, tmp_path):
        with pytest.raises(ModelLoadError):
            load_model(tmp_path / "absent.card")

    def test_missing_artifact(self, tmp_path):
        card = tmp_path / "model.card"
        card.write_text(
            "model_id = x\nkind = BuiltinLinear\nmean = 0,0,0\nstd = 1,1,1\n"
            "class_order = LowVD, HighVD\nartifact = gone.json\n"
        )
        with pytest.raises(ModelLoadError):
            load_model(card)

    def test_bad_class_order(self, tmp_path):
        card = tmp_path / "model.card"
        (tmp_path / "m.json").write_text("{}")
        card.write_text(
            "model_id = x\nkind = BuiltinLinear\nmean = 0,0,0\nstd = 1,1,1\n"
            "class_order = A, B\nartifact = m.json\n"
        )
        with pytest.raises(ModelLoadError):
            load_model(card)


class TestExternalGraph:
    def _write_model(self, tmp_path, weights, bias):
        from .onnx_helpers import channel_mean_softmax_model

        (tmp_path / "toy.onnx").write_bytes(channel_mean_softmax_model(weights, bias))
        (tmp_path / "model.card").write_text(
            "model_id = toy\nkind = ExternalGraph\nmean = 0,0,0\nstd = 1,1,1\n"
            "input_layout = THWC\nclass_order = LowVD, HighVD\nartifact = toy.onnx\n"
        )
        return tmp_path / "model.card"

    def test_predict_matches_numpy_reference(self, tmp_path, rng):
        w = np.array([[0.4, -0.4], [-1.2, 1.2], [0.3, -0.3]], dtype=np.float32)
        b = np.array([0.05, -0.05], dtype=np.float32)
        card = self._write_model(tmp_path, w, b)
        handle = load_model(card)
        clip = noise_clip(rng, 0.8)
        pred = predict_clip(handle, clip)

        pooled = clip.data.mean(axis=(0, 1, 2), dtype=np.float32)
        logits = pooled @ w + b
        e = np.exp(logits - logits.max())
        expected = (e / e.sum())[1]
        assert pred.prob_high_vd == pytest.approx(float(expected), abs=1e-6)
        assert pred.label is label_from_prob(pred.prob_high_vd)

    def test_deterministic(self, tmp_path, rng):
        w = np.array([[1.0, -1.0], [0.5, -0.5], [-0.2, 0.2]], dtype=np.float32)
        card = self._write_model(tmp_path, w, np.zeros(2, dtype=np.float32))
        handle = load_model(card)
        clip = noise_clip(rng, 0.5)
        assert (
            predict_clip(handle, clip).prob_high_vd
            == predict_clip(handle, clip).prob_high_vd
        )


class TestPredictionDump:
    def test_roundtrip_and_sorted(self, tmp_path):
        preds = [clip_pred(0.9, "vb"), clip_pred(0.1, "va"), clip_pred(0.7, "va")]
        path = write_prediction_dump(
            tmp_path / "dump.jsonl", preds, {"va": "i1", "vb": "i2"}
        )
        records = read_prediction_dump(path)
        assert [r["clip_id"] for r in records] == ["va#000", "va#001", "vb#000"]
        assert records[0]["individual_id"] == "i1"
        assert all(r["label"] in ("LowVD", "HighVD") for r in records)
