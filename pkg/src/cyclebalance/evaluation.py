"""Metrics and reports: per-class F1, ACSA, proxy-scored translation
accuracy, and repeated-run averaging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import torch

from .baselines import InferenceRule, threshold_shift
from .datasets import MAJORITY, MINORITY, LabeledExample, stack_images
from .errors import ContractViolation, ProxyQualityError
from .models import Classifier, Generator
from .seeding import derive_seed


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary counts with the minority class B as positive."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ContractViolation("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions: Sequence[str], labels: Sequence[str]) -> ConfusionMatrix:
    if len(predictions) != len(labels):
        raise ContractViolation("predictions and labels differ in length")
    tp = fp = tn = fn = 0
    for pred, lab in zip(predictions, labels):
        if lab == MINORITY:
            if pred == MINORITY:
                tp += 1
            else:
                fn += 1
        else:
            if pred == MINORITY:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def f1(cm: ConfusionMatrix, positive_class: str = MINORITY) -> float:
    """2 p r / (p + r), with 0 whenever the denominator degenerates."""
    if positive_class == MINORITY:
        tp, fp, fn = cm.tp, cm.fp, cm.fn
    else:
        tp, fp, fn = cm.tn, cm.fn, cm.fp
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def recall(cm: ConfusionMatrix, positive_class: str = MINORITY) -> float:
    if positive_class == MINORITY:
        tp, fn = cm.tp, cm.fn
    else:
        tp, fn = cm.tn, cm.fp
    if tp + fn == 0:
        return 0.0
    return tp / (tp + fn)


def acsa(cm: ConfusionMatrix) -> float:
    """Average class-specific accuracy: mean of the two per-class recalls."""
    return (recall(cm, MINORITY) + recall(cm, MAJORITY)) / 2.0


def predict(
    classifier: Classifier,
    examples: Sequence[LabeledExample],
    rule: InferenceRule = InferenceRule("argmax"),
    batch_size: int = 64,
) -> list[str]:
    """Class labels under the given inference rule.

    Default rule: predict B iff z >= 0.5. The threshold rule divides the
    class probabilities by the training priors before the argmax.
    """
    classifier.eval()
    out: list[str] = []
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            z = classifier.minority_probability(stack_images(chunk))
            for zi in z.tolist():
                if rule.kind == "argmax":
                    out.append(MINORITY if zi >= 0.5 else MAJORITY)
                elif rule.kind == "threshold":
                    idx = threshold_shift((1.0 - zi, zi), rule.priors)
                    out.append(MINORITY if idx == 1 else MAJORITY)
                else:
                    raise ContractViolation(f"unknown inference rule {rule.kind!r}")
    return out


def evaluate_classifier(
    classifier: Classifier,
    examples: Sequence[LabeledExample],
    rule: InferenceRule = InferenceRule("argmax"),
) -> dict[str, float]:
    preds = predict(classifier, examples, rule)
    cm = confusion(preds, [ex.label for ex in examples])
    return {
        "f1_minority": f1(cm, MINORITY),
        "f1_majority": f1(cm, MAJORITY),
        "acsa": acsa(cm),
        "recall_minority": recall(cm, MINORITY),
        "recall_majority": recall(cm, MAJORITY),
        "accuracy": (cm.tp + cm.tn) / cm.total if cm.total else 0.0,
    }


# ---------------------------------------------------------------------------
# Proxy-scored translation accuracy
# ---------------------------------------------------------------------------


@dataclass
class ProxyClassifier:
    """Scoring classifier trained on balanced data disjoint from the test
    set, with its measured accuracy on real held-out images."""

    classifier: Classifier
    real_accuracy: float

    def predict_labels(self, images: torch.Tensor) -> list[str]:
        self.classifier.eval()
        with torch.no_grad():
            logits = self.classifier(images)
        return [MINORITY if i == 1 else MAJORITY for i in logits.argmax(dim=1).tolist()]


def inception_accuracy(
    proxy: ProxyClassifier,
    generator: Generator,
    source_images: torch.Tensor,
    target_label: str,
    floor: float = 0.9,
    batch_size: int = 64,
) -> float:
    """Fraction of translated images the proxy assigns to the target class.

    Refuses to score when the proxy's own accuracy on real held-out data
    is below ``floor``: a weak judge would make the number meaningless.
    """
    if proxy.real_accuracy < floor:
        raise ProxyQualityError(
            f"proxy accuracy {proxy.real_accuracy:.4f} on real data is below "
            f"the floor {floor:.4f}; retrain the proxy before scoring"
        )
    if len(source_images) == 0:
        raise ContractViolation("no source images to translate")
    generator.eval()
    hits = 0
    with torch.no_grad():
        for start in range(0, len(source_images), batch_size):
            translated = generator(source_images[start : start + batch_size])
            preds = proxy.predict_labels(translated)
            hits += sum(p == target_label for p in preds)
    return hits / len(source_images)


def gan_translation_report(
    proxy: ProxyClassifier,
    g_ab: Generator,
    g_ba: Generator,
    test_examples: Sequence[LabeledExample],
    floor: float = 0.9,
) -> dict[str, float]:
    """Translation accuracy per direction and their mean."""
    a_images = stack_images([ex for ex in test_examples if ex.label == MAJORITY])
    b_images = stack_images([ex for ex in test_examples if ex.label == MINORITY])
    a2b = inception_accuracy(proxy, g_ab, a_images, MINORITY, floor)
    b2a = inception_accuracy(proxy, g_ba, b_images, MAJORITY, floor)
    return {"a_to_b": a2b, "b_to_a": b2a, "mean": (a2b + b2a) / 2.0}


# ---------------------------------------------------------------------------
# Repeated runs
# ---------------------------------------------------------------------------

MEAN_FIELDS = ("f1_minority", "f1_majority", "acsa", "inception_accuracy")


@dataclass
class MetricsReport:
    """Per-run metrics and their arithmetic means."""

    n_runs: int
    runs: list[dict[str, float]]
    f1_minority: float = field(init=False)
    f1_majority: float = field(init=False)
    acsa: float = field(init=False)
    inception_accuracy: float | None = field(init=False)

    def __post_init__(self):
        if self.n_runs != len(self.runs) or self.n_runs < 1:
            raise ContractViolation("n_runs must match the number of run records")
        for name in MEAN_FIELDS:
            present = [r[name] for r in self.runs if name in r]
            if len(present) not in (0, self.n_runs):
                raise ContractViolation(f"metric {name} present in only some runs")
            value = sum(present) / len(present) if present else None
            object.__setattr__(self, name, value)

    def to_dict(self) -> dict:
        means = {
            name: getattr(self, name)
            for name in MEAN_FIELDS
            if getattr(self, name) is not None
        }
        return {"n_runs": self.n_runs, "mean": means, "runs": self.runs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> "MetricsReport":
        return cls(n_runs=payload["n_runs"], runs=payload["runs"])


def run_repeated(
    run_fn: Callable[[int], dict[str, float]],
    n_runs: int,
    base_seed: int,
) -> MetricsReport:
    """Run the experiment n times with distinct derived seeds, same data.

    ``run_fn`` receives the seed for one run and returns its metrics dict.
    """
    runs = [run_fn(derive_seed(base_seed, "run", i)) for i in range(n_runs)]
    return MetricsReport(n_runs=n_runs, runs=runs)
