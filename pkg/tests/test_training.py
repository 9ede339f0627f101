import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from avdwf.errors import AUCUndefinedError, ConfigError, TrainingDivergedError
from avdwf.model import AVDetector, ModelConfig
from avdwf.training.experiment import split_counts, stratified_split
from avdwf.training.metrics import binary_metrics, roc_auc
from avdwf.training.synthetic import (
    SyntheticSample,
    SyntheticSpec,
    coupling_statistic,
    generate_dataset,
)
from avdwf.training.trainer import (
    FeatureSet,
    TrainConfig,
    batch_loss,
    evaluate,
    prepare_features,
    train,
)


@pytest.fixture(scope="module")
def small():
    samples = generate_dataset(16, seed=4)
    return samples, prepare_features(samples, ModelConfig(), seed=4)


def params_of(model):
    return {n: p.data.copy() for n, p in model.named_parameters()}


class TestSynthetic:
    def test_counts_with_single_forgery_kind(self):
        data = generate_dataset(100, seed=0, forgery_mix={"video_only": 1.0})
        kinds = [s.forgery_type for s in data]
        assert kinds.count("none") == 50 and kinds.count("video_only") == 50
        assert all((s.label == "real") == (s.forgery_type == "none") for s in data)

    def test_default_mix_is_balanced(self):
        kinds = [s.forgery_type for s in generate_dataset(30, seed=0)]
        assert kinds.count("none") == 15
        assert sorted(kinds.count(k) for k in ("video_only", "audio_only", "desync")) == [5, 5, 5]

    def test_same_seed_bit_identical(self):
        a, b = generate_dataset(6, seed=9), generate_dataset(6, seed=9)
        for x, y in zip(a, b):
            assert x.face_block.frames.tobytes() == y.face_block.frames.tobytes()
            assert x.audio.samples.tobytes() == y.audio.samples.tobytes()
            assert (x.label, x.forgery_type, x.sample_id) == (y.label, y.forgery_type, y.sample_id)

    @pytest.mark.parametrize("mix", [{"video_only": 0.5}, {"video_only": 1.5, "desync": -0.5},
                                     {"bogus": 1.0}])
    def test_invalid_mix(self, mix):
        with pytest.raises(ConfigError):
            generate_dataset(10, seed=0, forgery_mix=mix)

    def test_too_few_samples(self):
        with pytest.raises(ConfigError):
            generate_dataset(1, seed=0)

    def test_coupling_statistic_separates_real_from_fake(self):
        data = generate_dataset(60, seed=2)
        for s in data:
            stat = coupling_statistic(s)
            if s.label == "real":
                assert stat > 0.9, s.sample_id
            else:
                assert stat < 0.9, (s.sample_id, s.forgery_type)

    def test_label_invariant_enforced(self):
        s = generate_dataset(2, seed=0)[0]
        with pytest.raises(ValueError):
            SyntheticSample(s.face_block, s.audio, "real", "desync")

    def test_stream_shapes(self):
        spec = SyntheticSpec()
        s = generate_dataset(2, seed=0)[0]
        assert s.face_block.frames.shape == (spec.T, 1, spec.H, spec.W)
        assert s.audio.samples.size == spec.n_samples
        assert s.face_block.frames.min() >= 0 and s.face_block.frames.max() <= 1


class TestTrain:
    def test_zero_lr_leaves_parameters(self, small):
        _, fs = small
        model = AVDetector(ModelConfig(), seed=1)
        before = params_of(model)
        train(model, fs, TrainConfig(lr=0.0, epochs=2, seed=1))
        for name, value in params_of(model).items():
            assert value.tobytes() == before[name].tobytes(), name

    def test_one_step_decreases_single_sample_loss(self, small):
        _, fs = small
        for seed in (1, 2, 3):
            model = AVDetector(ModelConfig(), seed=seed)
            one = fs.subset([seed])
            before = float(batch_loss(model, one, [0])[0].data)
            train(model, one, TrainConfig(lr=1e-3, epochs=1, batch_size=1, seed=seed))
            assert float(batch_loss(model, one, [0])[0].data) < before

    def test_same_seed_same_final_loss(self, small):
        _, fs = small
        losses = []
        for _ in range(2):
            model = AVDetector(ModelConfig(), seed=5)
            losses.append(train(model, fs, TrainConfig(epochs=2, seed=5)).final_loss)
        assert losses[0] == losses[1]

    def test_history_rows(self, small):
        _, fs = small
        result = train(AVDetector(ModelConfig(), seed=0), fs.subset(range(8)),
                       TrainConfig(epochs=2), val=fs.subset(range(8, 16)))
        assert [(r["epoch"], r["split"]) for r in result.history] == [
            (1, "train"), (1, "val"), (2, "train"), (2, "val")]
        assert result.history_csv().splitlines()[0] == "epoch,split,loss,acc"

    def test_divergence_is_reported(self, small):
        _, fs = small
        model = AVDetector(ModelConfig(), seed=0)
        bad = FeatureSet(fs.frames.copy(), fs.audio.copy(), fs.labels, fs.forgery, fs.ids)
        bad.audio[0, 0, 0] = np.nan
        with pytest.raises(TrainingDivergedError):
            train(model, bad.subset([0]), TrainConfig(epochs=1))

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            TrainConfig(fusion_mode="late").validate()

    @pytest.mark.parametrize("fusion", ["visual_only", "av_concat", "av_dwf"])
    def test_every_fusion_mode_trains(self, small, fusion):
        _, fs = small
        model = AVDetector(ModelConfig(fusion_mode=fusion), seed=0)
        result = train(model, fs, TrainConfig(epochs=1, fusion_mode=fusion))
        assert np.isfinite(result.final_loss)
        assert set(evaluate(model, fs)) >= {"acc", "auc", "confusion"}


class TestMetrics:
    def test_perfect_separation(self):
        m = binary_metrics([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        assert m["acc"] == 1.0 and m["auc"] == 1.0
        assert m["confusion"] == {"tp": 2, "fp": 0, "tn": 2, "fn": 0}

    def test_all_ties(self):
        assert roc_auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_matches_pair_counting(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            scores = rng.integers(0, 5, size=20) / 4.0
            labels = rng.integers(0, 2, size=20)
            if labels.min() == labels.max():
                continue
            assert roc_auc(scores, labels) == oracles.auc_pairs(scores.tolist(), labels.tolist())

    @settings(max_examples=50, deadline=None)
    # scores on a coarse grid so the transform stays strictly monotone in floating point
    @given(st.lists(st.integers(-20, 20), min_size=4, max_size=30),
           st.randoms(use_true_random=False))
    def test_monotone_invariance_and_flip(self, scores, rnd):
        labels = [rnd.randint(0, 1) for _ in scores]
        if len(set(labels)) < 2:
            labels[0], labels[1] = 0, 1
        s = np.array(scores) / 4.0
        y = np.array(labels)
        auc = roc_auc(s, y)
        assert roc_auc(np.exp(s) * 3 + 1, y) == auc
        assert roc_auc(s, 1 - y) == pytest.approx(1 - auc, abs=1e-12)

    def test_single_class_keeps_accuracy(self):
        with pytest.raises(AUCUndefinedError) as info:
            binary_metrics([0.2, 0.7], [1, 1])
        assert info.value.metrics["acc"] == 0.5


class TestSplit:
    def test_ten_samples(self):
        assert split_counts(10) == (7, 1, 2)

    def test_stratified_is_deterministic_and_disjoint(self):
        labels = np.array([0, 1] * 50)
        a, b = stratified_split(labels, seed=3), stratified_split(labels, seed=3)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert sorted(np.concatenate(list(a.values())).tolist()) == list(range(100))
        assert [int(labels[a[k]].sum()) for k in ("train", "val", "test")] == [35, 5, 10]
