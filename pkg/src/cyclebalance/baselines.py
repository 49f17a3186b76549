"""Classical rebalancing baselines: resampling, reweighting, thresholding.

Each method is a pure transformation of the dataset, the per-class loss
weights, or the inference rule; ``apply_baseline`` composes them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .datasets import MINORITY, ImbalancedDataset, LabeledExample
from .errors import CapacityError, ConfigurationError, ContractViolation
from .seeding import derive_seed

VALID_METHODS = ("vanilla", "os", "us", "cs", "ts", "smote", "cbl", "us+cs", "os+cs")


@dataclass(frozen=True)
class BaselineMethod:
    """One rebalancing method plus its hyperparameters."""

    kind: str
    k: int | None = None  # SMOTE neighbor count
    beta: float | None = None  # CBL effective-number base

    def __post_init__(self):
        if self.kind not in VALID_METHODS:
            raise ConfigurationError(
                f"unknown baseline {self.kind!r}, expected one of {VALID_METHODS}"
            )
        if self.kind == "smote" and (self.k is None or self.k < 1):
            raise ConfigurationError("smote needs k >= 1")
        if self.kind == "cbl":
            if self.beta is None or not (0.0 <= self.beta < 1.0):
                raise ConfigurationError("cbl needs beta in [0, 1)")

    def describe(self) -> str:
        if self.kind == "smote":
            return f"smote:k={self.k}"
        if self.kind == "cbl":
            return f"cbl:beta={self.beta:g}"
        return self.kind


def parse_baseline(text: str) -> BaselineMethod:
    """Parse config strings like ``os``, ``smote:k=5``, ``cbl:beta=0.999``."""
    text = text.strip().lower()
    kind, _, argpart = text.partition(":")
    params: dict[str, float] = {}
    if argpart:
        for item in argpart.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ConfigurationError(f"malformed baseline argument {item!r}")
            try:
                params[key.strip()] = float(val)
            except ValueError:
                raise ConfigurationError(
                    f"baseline argument {key.strip()!r} must be numeric, got {val!r}"
                ) from None
    if kind == "smote":
        k = int(params.pop("k", 5))
        method = BaselineMethod("smote", k=k)
    elif kind == "cbl":
        beta = params.pop("beta", 0.999)
        method = BaselineMethod("cbl", beta=beta)
    else:
        method = BaselineMethod(kind)
    if params:
        raise ConfigurationError(
            f"unexpected arguments for {kind!r}: {sorted(params)}"
        )
    return method


@dataclass(frozen=True)
class InferenceRule:
    """How predictions are made: plain argmax or prior-shifted threshold."""

    kind: str  # "argmax" or "threshold"
    priors: tuple[float, float] | None = None


# ---------------------------------------------------------------------------
# Primitive transforms
# ---------------------------------------------------------------------------


def oversample(ds: ImbalancedDataset, seed: int) -> ImbalancedDataset:
    """Replicate random minority examples (with replacement) up to |train_A|.

    Every original minority example is kept, so each appears at least once.
    """
    n_a, n_b = ds.counts()
    extra = n_a - n_b
    if extra == 0:
        return ds
    rng = np.random.default_rng(derive_seed(seed, "oversample"))
    picks = rng.integers(0, n_b, size=extra)
    train_b = list(ds.train_b) + [ds.train_b[i] for i in picks]
    return ImbalancedDataset(
        train_a=list(ds.train_a), train_b=train_b, val=list(ds.val), test=list(ds.test)
    )


def undersample(ds: ImbalancedDataset, seed: int) -> ImbalancedDataset:
    """Drop random majority examples (without replacement) down to |train_B|."""
    n_a, n_b = ds.counts()
    if n_a == n_b:
        return ds
    rng = np.random.default_rng(derive_seed(seed, "undersample"))
    keep = np.sort(rng.choice(n_a, size=n_b, replace=False))
    train_a = [ds.train_a[i] for i in keep]
    return ImbalancedDataset(
        train_a=train_a, train_b=list(ds.train_b), val=list(ds.val), test=list(ds.test)
    )


def cost_sensitive_weights(n_a: int, n_b: int) -> tuple[float, float]:
    """Inverse-frequency loss weights, normalized so w_A + w_B = 2."""
    if n_a < 1 or n_b < 1:
        raise ContractViolation("class counts must be >= 1")
    total = n_a + n_b
    return 2.0 * n_b / total, 2.0 * n_a / total


def threshold_shift(
    class_probs: Sequence[float], train_priors: Sequence[float]
) -> int:
    """Predicted class index under prior-corrected probabilities.

    argmax of probs[c] / priors[c]; exact ties go to the rarest class.
    """
    probs = np.asarray(class_probs, dtype=np.float64)
    priors = np.asarray(train_priors, dtype=np.float64)
    if probs.shape != priors.shape:
        raise ContractViolation("probs and priors must have the same shape")
    if (priors <= 0).any():
        raise ContractViolation("priors must be strictly positive")
    adjusted = probs / priors
    best = adjusted.max()
    tied = np.flatnonzero(adjusted == best)
    if len(tied) == 1:
        return int(tied[0])
    return int(tied[np.argmin(priors[tied])])


def _interpolate(x: np.ndarray, x_nn: np.ndarray, lam: float) -> np.ndarray:
    return x + lam * (x_nn - x)


def smote(
    minority_vectors: np.ndarray, k: int, n_new: int, seed: int
) -> np.ndarray:
    """Synthetic minority vectors on segments to k nearest neighbors.

    Each synthetic point is x + lambda (x_nn - x) for a random minority
    base x, one of its k Euclidean-nearest minority neighbors x_nn, and
    lambda ~ Uniform[0, 1].
    """
    x = np.asarray(minority_vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ContractViolation("minority_vectors must be 2-D (n, features)")
    n = len(x)
    if n < k + 1:
        raise CapacityError(f"smote with k={k} needs at least {k + 1} examples, got {n}")
    # Squared distances without the n^2 * d intermediate; ties broken by
    # index via stable argsort so neighbor lists are deterministic.
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, np.inf)
    neighbors = np.argsort(d2, axis=1, kind="stable")[:, :k]
    rng = np.random.default_rng(derive_seed(seed, "smote"))
    out = np.empty((n_new, x.shape[1]), dtype=np.float64)
    for row in range(n_new):
        i = int(rng.integers(n))
        j = int(neighbors[i, rng.integers(k)])
        lam = float(rng.uniform())
        out[row] = _interpolate(x[i], x[j], lam)
    return out


def cbl_weights(counts_per_class: Sequence[int], beta: float) -> np.ndarray:
    """Weights inverse to the effective number (1 - beta^n) / (1 - beta),
    normalized to sum to the class count."""
    if beta >= 1.0 or beta < 0.0:
        raise ContractViolation("beta must be in [0, 1)")
    counts = np.asarray(counts_per_class, dtype=np.float64)
    if (counts < 1).any():
        raise ContractViolation("class counts must be >= 1")
    effective = (1.0 - np.power(beta, counts)) / (1.0 - beta)
    raw = 1.0 / effective
    return raw * (len(counts) / raw.sum())


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


@dataclass
class BaselineResult:
    """Dataset, loss weights (w_A, w_B), and inference rule after a method."""

    dataset: ImbalancedDataset
    loss_weights: tuple[float, float]
    inference: InferenceRule
    method: BaselineMethod


def _smote_dataset(ds: ImbalancedDataset, k: int, seed: int) -> ImbalancedDataset:
    n_a, n_b = ds.counts()
    n_new = n_a - n_b
    if n_new == 0:
        return ds
    shape = tuple(ds.train_b[0].image.shape)
    vectors = np.stack([ex.image.numpy().reshape(-1) for ex in ds.train_b])
    synth = smote(vectors, k=k, n_new=n_new, seed=seed)
    extras = [
        LabeledExample(
            torch.from_numpy(v.reshape(shape)).float(),
            MINORITY,
            f"smote:{seed}:{i}",
        )
        for i, v in enumerate(synth)
    ]
    return ImbalancedDataset(
        train_a=list(ds.train_a),
        train_b=list(ds.train_b) + extras,
        val=list(ds.val),
        test=list(ds.test),
    )


def apply_baseline(
    method: BaselineMethod,
    ds: ImbalancedDataset,
    seed: int,
    cs_on_original_counts: bool = False,
) -> BaselineResult:
    """Compose the primitive transforms for one method.

    Combinations sample first and then compute cost-sensitive weights on
    the resampled (balanced) counts, which makes CS degenerate to uniform;
    ``cs_on_original_counts`` computes the weights on the pre-sampling
    counts instead.
    """
    n_a0, n_b0 = ds.counts()
    weights = (1.0, 1.0)
    inference = InferenceRule("argmax")
    out = ds
    if method.kind == "vanilla":
        pass
    elif method.kind == "os":
        out = oversample(ds, seed)
    elif method.kind == "us":
        out = undersample(ds, seed)
    elif method.kind == "cs":
        weights = cost_sensitive_weights(n_a0, n_b0)
    elif method.kind == "ts":
        total = n_a0 + n_b0
        inference = InferenceRule("threshold", priors=(n_a0 / total, n_b0 / total))
    elif method.kind == "smote":
        out = _smote_dataset(ds, method.k, seed)
    elif method.kind == "cbl":
        w = cbl_weights([n_a0, n_b0], method.beta)
        weights = (float(w[0]), float(w[1]))
    elif method.kind in ("us+cs", "os+cs"):
        out = undersample(ds, seed) if method.kind == "us+cs" else oversample(ds, seed)
        if cs_on_original_counts:
            weights = cost_sensitive_weights(n_a0, n_b0)
        else:
            weights = cost_sensitive_weights(*out.counts())
    else:  # pragma: no cover - guarded by BaselineMethod validation
        raise ConfigurationError(f"unhandled baseline {method.kind!r}")
    return BaselineResult(dataset=out, loss_weights=weights, inference=inference, method=method)
