import json

import numpy as np
import pytest
import torch
import torch.nn as nn

from cyclebalance.baselines import InferenceRule
from cyclebalance.errors import ContractViolation, ProxyQualityError
from cyclebalance.evaluation import (
    ConfusionMatrix,
    MetricsReport,
    ProxyClassifier,
    acsa,
    confusion,
    evaluate_classifier,
    f1,
    gan_translation_report,
    inception_accuracy,
    predict,
    recall,
    run_repeated,
)


def brute_force_f1(preds, labels, positive):
    # independent recomputation straight from the definition
    tp = sum(1 for p, l in zip(preds, labels) if p == positive and l == positive)
    fp = sum(1 for p, l in zip(preds, labels) if p == positive and l != positive)
    fn = sum(1 for p, l in zip(preds, labels) if p != positive and l == positive)
    if tp == 0 and (fp == 0 or fn == 0) and (tp + fp == 0 or tp + fn == 0):
        if 2 * tp + fp + fn == 0:
            return 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    if prec + rec == 0:
        return 0.0
    return 2 * prec * rec / (prec + rec)


def brute_force_acsa(preds, labels):
    accs = []
    for cls in ("B", "A"):
        members = [(p, l) for p, l in zip(preds, labels) if l == cls]
        if not members:
            accs.append(0.0)
            continue
        accs.append(sum(1 for p, l in members if p == l) / len(members))
    return sum(accs) / 2.0


class TestConfusion:
    def test_perfect(self):
        cm = confusion(["A", "B", "B"], ["A", "B", "B"])
        assert (cm.fp, cm.fn) == (0, 0)
        assert (cm.tp, cm.tn) == (2, 1)

    def test_all_minority_on_balanced(self):
        preds = ["B"] * 20
        labels = ["B"] * 10 + ["A"] * 10
        cm = confusion(preds, labels)
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (10, 10, 0, 0)

    def test_counts_sum_to_n(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 40))
            preds = [("A", "B")[i] for i in rng.integers(0, 2, n)]
            labels = [("A", "B")[i] for i in rng.integers(0, 2, n)]
            assert confusion(preds, labels).total == n

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            confusion(["A"], ["A", "B"])

    def test_negative_counts_rejected(self):
        with pytest.raises(ContractViolation):
            ConfusionMatrix(1, -1, 0, 0)


class TestF1:
    def test_perfect_is_one(self):
        assert f1(ConfusionMatrix(tp=5, fp=0, tn=5, fn=0)) == 1.0

    def test_half(self):
        # tp=1, fp=1, fn=1: precision = recall = 0.5
        assert f1(ConfusionMatrix(tp=1, fp=1, tn=0, fn=1)) == 0.5

    def test_zero_denominator_rule(self):
        assert f1(ConfusionMatrix(tp=0, fp=0, tn=5, fn=0)) == 0.0
        assert f1(ConfusionMatrix(tp=0, fp=2, tn=3, fn=2)) == 0.0

    def test_majority_view(self):
        cm = ConfusionMatrix(tp=3, fp=2, tn=10, fn=1)
        # majority F1 treats A as positive: tp'=tn, fp'=fn, fn'=fp
        assert f1(cm, "A") == pytest.approx(2 * 10 / (2 * 10 + 1 + 2))


class TestAcsa:
    def test_mean_of_recalls(self):
        # minority recall 8/10, majority recall 6/10
        cm = ConfusionMatrix(tp=8, fn=2, tn=6, fp=4)
        assert recall(cm, "B") == pytest.approx(0.8)
        assert recall(cm, "A") == pytest.approx(0.6)
        assert acsa(cm) == pytest.approx(0.7)

    def test_perfect(self):
        assert acsa(ConfusionMatrix(tp=4, fp=0, tn=9, fn=0)) == 1.0

    def test_all_majority_predictor(self):
        cm = confusion(["A"] * 30, ["A"] * 20 + ["B"] * 10)
        assert acsa(cm) == 0.5


class TestBruteForceAgreement:
    def test_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            n = int(rng.integers(4, 60))
            # ensure both classes appear among the labels
            labels = ["A", "B"] + [("A", "B")[i] for i in rng.integers(0, 2, n)]
            preds = [("A", "B")[i] for i in rng.integers(0, 2, len(labels))]
            cm = confusion(preds, labels)
            assert abs(f1(cm, "B") - brute_force_f1(preds, labels, "B")) < 1e-12
            assert abs(f1(cm, "A") - brute_force_f1(preds, labels, "A")) < 1e-12
            assert abs(acsa(cm) - brute_force_acsa(preds, labels)) < 1e-12

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(7)
        flip = {"A": "B", "B": "A"}
        for _ in range(30):
            labels = ["A", "B"] + [("A", "B")[i] for i in rng.integers(0, 2, 20)]
            preds = [("A", "B")[i] for i in rng.integers(0, 2, len(labels))]
            cm = confusion(preds, labels)
            cm_flipped = confusion([flip[p] for p in preds], [flip[l] for l in labels])
            assert f1(cm, "B") == pytest.approx(f1(cm_flipped, "A"), abs=1e-15)
            assert f1(cm, "A") == pytest.approx(f1(cm_flipped, "B"), abs=1e-15)
            assert acsa(cm) == pytest.approx(acsa(cm_flipped), abs=1e-15)


class _FixedZClassifier(nn.Module):
    """Duck-typed stand-in: emits a fixed minority probability per image."""

    def __init__(self, zs):
        super().__init__()
        self.zs = list(zs)

    def minority_probability(self, x):
        return torch.tensor(self.zs[: len(x)])


class _Example:
    def __init__(self, label):
        self.image = torch.zeros(3, 4, 4)
        self.label = label


class TestPredict:
    def test_default_threshold_half(self):
        clf = _FixedZClassifier([0.2, 0.5, 0.8])
        examples = [_Example("A"), _Example("B"), _Example("B")]
        assert predict(clf, examples) == ["A", "B", "B"]

    def test_threshold_rule_shifts_decision(self):
        clf = _FixedZClassifier([0.15])
        examples = [_Example("B")]
        rule = InferenceRule("threshold", priors=(900 / 950, 50 / 950))
        assert predict(clf, examples, rule) == ["B"]
        assert predict(clf, examples) == ["A"]

    def test_evaluate_classifier_keys(self):
        clf = _FixedZClassifier([0.9, 0.1, 0.6, 0.4])
        examples = [_Example("B"), _Example("A"), _Example("B"), _Example("A")]
        res = evaluate_classifier(clf, examples)
        assert res["f1_minority"] == 1.0
        assert res["f1_majority"] == 1.0
        assert res["acsa"] == 1.0
        assert res["accuracy"] == 1.0


class _SignProxy:
    """Perfect judge for sign-coded images: mean > 0 means class B."""

    real_accuracy = 1.0

    def predict_labels(self, images):
        return ["B" if float(im.mean()) > 0 else "A" for im in images]


class _FlipGenerator(nn.Module):
    def forward(self, x):
        return -x


class TestInceptionAccuracy:
    def a_images(self, n=6):
        return -torch.ones(n, 3, 4, 4)

    def test_identity_generator_scores_zero(self):
        # identity output stays class A, judged against target B
        acc = inception_accuracy(_SignProxy(), nn.Identity(), self.a_images(), "B")
        assert acc == 0.0

    def test_true_translator_scores_one(self):
        acc = inception_accuracy(_SignProxy(), _FlipGenerator(), self.a_images(), "B")
        assert acc == 1.0

    def test_floor_refusal(self):
        weak = _SignProxy()
        weak.real_accuracy = 0.6
        with pytest.raises(ProxyQualityError):
            inception_accuracy(weak, nn.Identity(), self.a_images(), "B", floor=0.9)

    def test_empty_source_rejected(self):
        with pytest.raises(ContractViolation):
            inception_accuracy(_SignProxy(), nn.Identity(), torch.zeros(0, 3, 4, 4), "B")

    def test_report_both_directions_and_mean(self):
        examples = [_Example("A") for _ in range(4)] + [_Example("B") for _ in range(4)]
        for ex in examples:
            ex.image = -torch.ones(3, 4, 4) if ex.label == "A" else torch.ones(3, 4, 4)
        rep = gan_translation_report(
            _SignProxy(), _FlipGenerator(), _FlipGenerator(), examples
        )
        assert rep["a_to_b"] == 1.0
        assert rep["b_to_a"] == 1.0
        assert rep["mean"] == 1.0

    def test_proxy_wrapper_uses_argmax(self):
        class TwoLogit(nn.Module):
            def forward(self, x):
                n = len(x)
                logits = torch.zeros(n, 2)
                logits[:, 1] = x.mean(dim=(1, 2, 3))
                return logits

        proxy = ProxyClassifier(classifier=TwoLogit(), real_accuracy=1.0)
        images = torch.cat([torch.ones(2, 3, 4, 4), -torch.ones(2, 3, 4, 4)])
        assert proxy.predict_labels(images) == ["B", "B", "A", "A"]


class TestMetricsReport:
    def run(self, f1b, f1a, a, inc=None):
        d = {"f1_minority": f1b, "f1_majority": f1a, "acsa": a}
        if inc is not None:
            d["inception_accuracy"] = inc
        return d

    def test_single_run_mean_is_value(self):
        rep = MetricsReport(n_runs=1, runs=[self.run(0.5, 0.8, 0.7, 0.4)])
        assert rep.f1_minority == 0.5
        assert rep.inception_accuracy == 0.4

    def test_mean_matches_external_recheck(self):
        rng = np.random.default_rng(3)
        runs = [self.run(*rng.uniform(0, 1, 3)) for _ in range(5)]
        rep = MetricsReport(n_runs=5, runs=runs)
        assert abs(rep.f1_minority - sum(r["f1_minority"] for r in runs) / 5) < 1e-9
        assert abs(rep.acsa - sum(r["acsa"] for r in runs) / 5) < 1e-9
        assert rep.inception_accuracy is None

    def test_constant_runs_zero_spread(self):
        rep = MetricsReport(n_runs=3, runs=[self.run(0.6, 0.9, 0.75)] * 3)
        assert rep.f1_minority == 0.6

    def test_partial_metric_rejected(self):
        runs = [self.run(0.5, 0.8, 0.7, 0.4), self.run(0.5, 0.8, 0.7)]
        with pytest.raises(ContractViolation):
            MetricsReport(n_runs=2, runs=runs)

    def test_run_count_mismatch(self):
        with pytest.raises(ContractViolation):
            MetricsReport(n_runs=3, runs=[self.run(0.5, 0.8, 0.7)])

    def test_json_round_trip_and_stability(self):
        runs = [self.run(0.5, 0.8, 0.7, 0.4), self.run(0.52, 0.81, 0.72, 0.38)]
        rep = MetricsReport(n_runs=2, runs=runs)
        text1 = rep.to_json()
        text2 = MetricsReport.from_dict(json.loads(text1)).to_json()
        assert text1 == text2  # byte-identical re-serialization

    def test_bounds(self):
        rep = MetricsReport(n_runs=2, runs=[self.run(0.5, 0.8, 0.7), self.run(0.6, 0.9, 0.8)])
        for name in ("f1_minority", "f1_majority", "acsa"):
            assert 0.0 <= getattr(rep, name) <= 1.0


class TestRunRepeated:
    def test_distinct_seeds_and_order(self):
        seen = []

        def run_fn(seed):
            seen.append(seed)
            return {"f1_minority": 0.5, "f1_majority": 0.5, "acsa": 0.5}

        rep = run_repeated(run_fn, n_runs=5, base_seed=123)
        assert rep.n_runs == 5
        assert len(set(seen)) == 5

    def test_reproducible_seed_sequence(self):
        seqs = []
        for _ in range(2):
            seen = []
            run_repeated(
                lambda s: (seen.append(s) or {"f1_minority": 0, "f1_majority": 0, "acsa": 0}),
                n_runs=3,
                base_seed=9,
            )
            seqs.append(seen)
        assert seqs[0] == seqs[1]
