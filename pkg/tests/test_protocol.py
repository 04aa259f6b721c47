import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mebench.corpus import Dataset, RawEthnicity, SampleRecord, build_manifest, finalize_mappings
from mebench.errors import DataError
from mebench.pipeline import BINARY_CLASSES
from mebench.protocol import (
    ConfusionMatrix,
    FoldResult,
    ForestConfig,
    PrimaFacieScenario,
    QuotaError,
    ScenarioKind,
    aggregate_folds,
    binarize_emotions,
    forest_predict,
    forest_predict_batch,
    forest_train,
    macro_f1,
    plan_loso,
    sample_prima_facie,
)
from mebench.protocol.forest import _best_split, _gini


def records_for(subjects, clips_per=2, emotions=("happiness", "disgust"), ethnicity=RawEthnicity.ASIAN):
    records = []
    for s in subjects:
        for c in range(clips_per):
            records.append(
                SampleRecord(
                    dataset=Dataset.SYNTH,
                    subject_id=s,
                    clip_id=f"c{c}",
                    onset_path="x",
                    apex_path="y",
                    raw_emotion=emotions[c % len(emotions)],
                    raw_ethnicity=ethnicity,
                )
            )
    return finalize_mappings(records)


# ---------------------------------------------------------------- folds


class TestPlanLoso:
    def test_three_subjects(self):
        records = records_for(["S1", "S2", "S3"])
        plans = plan_loso(records)
        assert len(plans) == 3
        for plan in plans:
            assert all(k.split(":")[1] == plan.held_out_subject for k in plan.test_keys)
            assert all(k.split(":")[1] != plan.held_out_subject for k in plan.train_keys)

    def test_partition_property(self):
        records = records_for([f"S{i}" for i in range(6)], clips_per=3)
        plans = plan_loso(records)
        all_keys = {f"{r.dataset.value}:{r.subject_id}:{r.clip_id}" for r in records}
        seen = []
        for plan in plans:
            seen.extend(plan.test_keys)
            assert set(plan.train_keys) | set(plan.test_keys) == all_keys
            assert set(plan.train_keys) & set(plan.test_keys) == set()
        assert sorted(seen) == sorted(all_keys)

    def test_54_subjects(self):
        records = records_for([f"S{i:02d}" for i in range(54)])
        assert len(plan_loso(records)) == 54

    def test_single_subject_rejected(self):
        with pytest.raises(DataError):
            plan_loso(records_for(["S1"]))

    def test_ordered_by_subject(self):
        plans = plan_loso(records_for(["S3", "S1", "S2"]))
        assert [p.held_out_subject for p in plans] == ["S1", "S2", "S3"]


# ---------------------------------------------------------------- metrics


def hand_binary_confusion():
    """actual neg = 4 (3 pred neg, 1 pred nonneg); actual nonneg = 4 (2 pred neg, 2 pred nonneg)."""
    return ConfusionMatrix(BINARY_CLASSES, np.array([[3, 1], [2, 2]]))


class TestMacroF1:
    def test_hand_derived_binary_example(self):
        per_class, macro = macro_f1(hand_binary_confusion())
        assert abs(per_class["Negative"] - 2 / 3) < 1e-9
        assert abs(per_class["NonNegative"] - 4 / 7) < 1e-9
        assert abs(macro - (2 / 3 + 4 / 7) / 2) < 1e-9
        assert abs(macro - 0.619048) < 1e-6

    def test_perfect_predictions(self):
        cm = ConfusionMatrix(("a", "b", "c"), np.diag([5, 3, 2]))
        per_class, macro = macro_f1(cm)
        assert all(v == 1.0 for v in per_class.values())
        assert macro == 1.0

    def test_absent_class_zero_convention(self):
        cm = ConfusionMatrix(("a", "b"), np.array([[4, 0], [0, 0]]))
        per_class, macro = macro_f1(cm)
        assert per_class["b"] == 0.0
        assert abs(macro - 0.5) < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        counts = rng.integers(0, 10, size=(3, 3))
        if counts.sum() == 0:
            counts[0, 0] = 1
        cm = ConfusionMatrix(("a", "b", "c"), counts)
        per_class, macro = macro_f1(cm)
        perm = rng.permutation(3)
        cm_p = ConfusionMatrix(
            tuple(np.array(cm.classes)[perm]), counts[np.ix_(perm, perm)]
        )
        per_class_p, macro_p = macro_f1(cm_p)
        assert abs(macro - macro_p) < 1e-12
        for i, name in enumerate(cm.classes):
            assert abs(per_class[name] - per_class_p[name]) < 1e-12

    def test_paper_row_consistency(self):
        # printed-table identities: Average = mean of class columns
        assert abs((0.4330 + 0.4762) / 2 - 0.4546) < 1e-12
        assert abs(np.mean([0.8142, 0.5225, 0.5263]) - 0.6210) < 1e-4
        assert round(float(np.mean([0.8142, 0.5225, 0.5263])), 4) == 0.6210


class TestAggregateFolds:
    def test_single_fold_identity(self):
        result = FoldResult("S1", hand_binary_confusion())
        report = aggregate_folds([result])
        per_class, macro = macro_f1(hand_binary_confusion())
        assert report.per_class_f1 == per_class
        assert report.macro == macro

    def test_two_folds_pool_to_hand_example(self):
        half_a = ConfusionMatrix(BINARY_CLASSES, np.array([[2, 0], [1, 1]]))
        half_b = ConfusionMatrix(BINARY_CLASSES, np.array([[1, 1], [1, 1]]))
        report = aggregate_folds([FoldResult("S1", half_a), FoldResult("S2", half_b)])
        assert abs(report.macro - (2 / 3 + 4 / 7) / 2) < 1e-9

    def test_fold_order_irrelevant(self):
        a = FoldResult("S1", ConfusionMatrix(BINARY_CLASSES, np.array([[2, 0], [1, 1]])))
        b = FoldResult("S2", ConfusionMatrix(BINARY_CLASSES, np.array([[1, 1], [1, 1]])))
        assert aggregate_folds([a, b]).macro == aggregate_folds([b, a]).macro

    def test_class_mismatch(self):
        a = FoldResult("S1", ConfusionMatrix(("x", "y")))
        b = FoldResult("S2", ConfusionMatrix(("x", "z")))
        a.confusion.add("x", "x")
        b.confusion.add("x", "x")
        with pytest.raises(DataError):
            aggregate_folds([a, b])


# ---------------------------------------------------------------- prima facie sampling


def mixed_manifest(n_asian=20, n_nonasian=16):
    records = records_for([f"A{i:02d}" for i in range(n_asian)], ethnicity=RawEthnicity.ASIAN)
    records += records_for(
        [f"N{i:02d}" for i in range(n_nonasian)], ethnicity=RawEthnicity.CAUCASIAN
    )
    return build_manifest(records, {"seed": 0}, check_paths=False)


class TestSamplePrimaFacie:
    def test_mixed_quotas(self):
        manifest = mixed_manifest()
        records = sample_prima_facie(manifest, PrimaFacieScenario(ScenarioKind.MIXED, seed=3))
        subjects = {r.subject_id for r in records}
        assert len(subjects) == 16
        assert sum(1 for s in subjects if s.startswith("A")) == 8
        assert sum(1 for s in subjects if s.startswith("N")) == 8

    def test_deterministic_per_seed(self):
        manifest = mixed_manifest()
        scenario = PrimaFacieScenario(ScenarioKind.ASIAN_ONLY, seed=9)
        a = {r.subject_id for r in sample_prima_facie(manifest, scenario)}
        b = {r.subject_id for r in sample_prima_facie(manifest, scenario)}
        assert a == b

    def test_infeasible_quota(self):
        manifest = mixed_manifest(n_asian=20, n_nonasian=10)
        with pytest.raises(QuotaError):
            sample_prima_facie(manifest, PrimaFacieScenario(ScenarioKind.NON_ASIAN_ONLY, seed=0))

    def test_only_allowed_ethnicities(self):
        manifest = mixed_manifest()
        records = sample_prima_facie(manifest, PrimaFacieScenario(ScenarioKind.ASIAN_ONLY, seed=1))
        assert all(r.mapped_ethnicity.value == "Asian" for r in records)


class TestBinarize:
    def test_mapping(self):
        records = records_for(["S1"], clips_per=3, emotions=("happiness", "disgust", "surprise"))
        labels = binarize_emotions(records)
        # happiness -> NonNegative, disgust -> Negative, surprise -> NonNegative
        assert labels == [1, 0, 1]

    def test_counts_conserved(self):
        records = records_for([f"S{i}" for i in range(5)], clips_per=3, emotions=("fear", "happiness", "surprise"))
        labels = binarize_emotions(records)
        assert len(labels) == len(records)
        assert labels.count(0) + labels.count(1) == len(records)


# ---------------------------------------------------------------- forest


class TestForest:
    def test_single_label_purity(self):
        x = np.random.default_rng(0).normal(size=(10, 3))
        y = np.full(10, 2)
        model = forest_train(x, y, ForestConfig(n_trees=5), seed=0)
        assert forest_predict(model, x[0]) == 2

    def test_depth1_split_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(4)
        x = np.concatenate([rng.uniform(0, 0.4, 12), rng.uniform(0.6, 1.0, 12)])[:, None]
        y = np.array([0] * 12 + [1] * 12)
        config = ForestConfig(n_trees=1, max_depth=1, min_leaf=1, feature_subsample="all", bootstrap=False)
        model = forest_train(x, y, config, seed=0)
        root = model.trees[0]
        assert not root.is_leaf

        # exhaustive oracle: weighted Gini over every midpoint threshold
        sorted_vals = np.sort(x[:, 0])
        best = (np.inf, None)
        for i in range(len(sorted_vals) - 1):
            if sorted_vals[i] == sorted_vals[i + 1]:
                continue
            thr = (sorted_vals[i] + sorted_vals[i + 1]) / 2
            left = y[x[:, 0] < thr]
            right = y[x[:, 0] >= thr]
            gini = (
                len(left) * _gini(np.bincount(left, minlength=2))
                + len(right) * _gini(np.bincount(right, minlength=2))
            ) / len(y)
            if gini < best[0] - 1e-15:
                best = (gini, thr)
        assert best[0] == 0.0
        assert abs(root.threshold - best[1]) < 1e-12
        preds = forest_predict_batch(model, x)
        assert np.array_equal(preds, y)

    def test_xor_quadrants(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, size=(200, 2))
        y = ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(int)
        model = forest_train(x, y, ForestConfig(n_trees=50, max_depth=4, min_leaf=1), seed=1)
        accuracy = (forest_predict_batch(model, x) == y).mean()
        assert accuracy >= 0.9

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 4))
        y = rng.integers(0, 2, 30)
        m1 = forest_train(x, y, ForestConfig(n_trees=10), seed=5)
        m2 = forest_train(x, y, ForestConfig(n_trees=10), seed=5)
        probe = rng.normal(size=(20, 4))
        assert np.array_equal(forest_predict_batch(m1, probe), forest_predict_batch(m2, probe))

    def test_duplicate_invariance_single_tree(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(25, 3))
        y = rng.integers(0, 2, 25)
        config = ForestConfig(n_trees=1, max_depth=4, min_leaf=1, feature_subsample="all", bootstrap=False)
        m1 = forest_train(x, y, config, seed=0)
        m2 = forest_train(np.repeat(x, 2, axis=0), np.repeat(y, 2), config, seed=0)

        def describe(node):
            if node.is_leaf:
                return ("leaf", node.prediction)
            return ("split", node.feature, round(node.threshold, 12), describe(node.left), describe(node.right))

        assert describe(m1.trees[0]) == describe(m2.trees[0])

    def test_empty_training_set(self):
        with pytest.raises(DataError):
            forest_train(np.zeros((0, 3)), np.zeros(0), ForestConfig(), seed=0)

    def test_inconsistent_feature_lengths(self):
        with pytest.raises(DataError):
            forest_train(np.zeros((4, 3)), np.zeros(5), ForestConfig(), seed=0)
