"""Dataset construction: image folders, synthetic textures, and batch schedules.

Class "A" is always the majority class and "B" the minority class; the
imbalance ratio gamma = |train_A| / |train_B| is computed at construction
and is >= 1 by construction (roles are swapped if the requested counts
would violate that).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
from PIL import Image

from .errors import CapacityError, ConfigurationError
from .seeding import derive_seed

MAJORITY = "A"
MINORITY = "B"

_IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class LabeledExample:
    """One image with its class label.

    ``image`` is a float32 tensor of shape (C, H, W) with values in [-1, 1].
    ``source_id`` identifies the underlying source image (file path or
    synthetic geometry index) and is used for train/val/test disjointness.
    """

    image: torch.Tensor
    label: str
    source_id: str


@dataclass(frozen=True)
class DatasetSpec:
    """What to load: source, per-class counts, image size, and seed."""

    source: str  # "synthetic" or "image_folder"
    n_majority: int
    n_minority: int
    val_per_class: int
    test_per_class: int
    image_size: int
    seed: int
    path: str | None = None
    class_a_name: str | None = None
    class_b_name: str | None = None

    def __post_init__(self):
        if self.source not in ("synthetic", "image_folder"):
            raise ConfigurationError(f"unknown dataset source {self.source!r}")
        if self.image_size <= 0:
            raise ConfigurationError("image_size must be positive")
        for name in ("n_majority", "n_minority", "val_per_class", "test_per_class"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.source == "image_folder":
            if not self.path or not self.class_a_name or not self.class_b_name:
                raise ConfigurationError(
                    "image_folder source needs path, class_a_name and class_b_name"
                )


@dataclass
class ImbalancedDataset:
    """Train split per class plus balanced val/test splits.

    Immutable after construction by convention; training code never mutates
    the example lists, so a dataset can be shared freely.
    """

    train_a: list[LabeledExample]
    train_b: list[LabeledExample]
    val: list[LabeledExample]
    test: list[LabeledExample]
    gamma: float = field(init=False)

    def __post_init__(self):
        if not self.train_b:
            raise CapacityError("minority class is empty")
        if len(self.train_a) < len(self.train_b):
            # Majority must be class A. Swap roles so gamma >= 1.
            self.train_a, self.train_b = self.train_b, self.train_a
            self.train_a = [_relabel(ex, MAJORITY) for ex in self.train_a]
            self.train_b = [_relabel(ex, MINORITY) for ex in self.train_b]
            self.val = [_flip_label(ex) for ex in self.val]
            self.test = [_flip_label(ex) for ex in self.test]
        self.gamma = len(self.train_a) / len(self.train_b)

    @property
    def train(self) -> list[LabeledExample]:
        return self.train_a + self.train_b

    def counts(self) -> tuple[int, int]:
        return len(self.train_a), len(self.train_b)


def _relabel(ex: LabeledExample, label: str) -> LabeledExample:
    return LabeledExample(ex.image, label, ex.source_id)


def _flip_label(ex: LabeledExample) -> LabeledExample:
    return _relabel(ex, MINORITY if ex.label == MAJORITY else MAJORITY)


def build_dataset(spec: DatasetSpec) -> ImbalancedDataset:
    """Dispatch on the spec source."""
    if spec.source == "synthetic":
        return synth_texture_dataset(spec)
    return load_image_folder(spec)


# ---------------------------------------------------------------------------
# Image folders
# ---------------------------------------------------------------------------


def _list_images(directory: Path) -> list[Path]:
    return sorted(
        p for p in directory.iterdir() if p.suffix.lower() in _IMAGE_EXTENSIONS
    )


def _load_image(path: Path, size: int) -> torch.Tensor:
    with Image.open(path) as img:
        img = img.convert("RGB").resize((size, size), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def load_image_folder(spec: DatasetSpec) -> ImbalancedDataset:
    """Load a two-class image folder into a controlled imbalanced split.

    Layout: ``<path>/<class_a_name>/*.png|jpg`` and the same for class B.
    Sampling is without replacement under the spec seed, so train/val/test
    are disjoint by file. Images are resized to ``image_size`` square and
    scaled to [-1, 1].
    """
    root = Path(spec.path)
    if not root.is_dir():
        raise ConfigurationError(f"dataset root {root} does not exist")
    needed = {
        MAJORITY: (spec.class_a_name, spec.n_majority),
        MINORITY: (spec.class_b_name, spec.n_minority),
    }
    per_class_files: dict[str, list[Path]] = {}
    for label, (class_name, n_train) in needed.items():
        class_dir = root / class_name
        if not class_dir.is_dir():
            raise ConfigurationError(f"class directory {class_dir} does not exist")
        files = _list_images(class_dir)
        total_needed = n_train + spec.val_per_class + spec.test_per_class
        if len(files) < total_needed:
            raise CapacityError(
                f"class {class_name!r} has {len(files)} images, "
                f"needs {total_needed} (short by {total_needed - len(files)})"
            )
        per_class_files[label] = files

    rng = np.random.default_rng(derive_seed(spec.seed, "folder-sample"))
    splits: dict[str, dict[str, list[LabeledExample]]] = {}
    for label, (class_name, n_train) in needed.items():
        files = per_class_files[label]
        order = rng.permutation(len(files))
        take = [files[i] for i in order]
        train = take[:n_train]
        val = take[n_train : n_train + spec.val_per_class]
        test = take[
            n_train + spec.val_per_class : n_train + spec.val_per_class + spec.test_per_class
        ]
        splits[label] = {
            part: [
                LabeledExample(_load_image(p, spec.image_size), label, str(p))
                for p in paths
            ]
            for part, paths in (("train", train), ("val", val), ("test", test))
        }

    return ImbalancedDataset(
        train_a=splits[MAJORITY]["train"],
        train_b=splits[MINORITY]["train"],
        val=splits[MAJORITY]["val"] + splits[MINORITY]["val"],
        test=splits[MAJORITY]["test"] + splits[MINORITY]["test"],
    )


# ---------------------------------------------------------------------------
# Synthetic textures
# ---------------------------------------------------------------------------
#
# Both classes share blob-on-gradient geometry; class B overlays diagonal
# stripes inside the blob. Translation between the classes is therefore a
# pure texture edit with fixed context: paint stripes in, or remove them.
# Stripe contrast varies per image, so weakly striped minority images
# genuinely overlap the majority class near contrast zero.

STRIPE_PERIOD = 4  # pixels between stripe lines (diagonal)
STRIPE_DUTY = 2  # stripe line thickness in pixels


def render_texture_pair(
    size: int, seed: int, index: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Render the class-A and class-B variants of one geometry sample.

    Returns (image_a, image_b), float32 CHW in [-1, 1]. The two variants
    differ exactly on the stripe mask (stripe lines clipped to the blob).
    """
    if size < 16:
        raise ConfigurationError("image_size below 16 cannot resolve the textures")
    rng = np.random.default_rng(derive_seed(seed, "texture", index))

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)

    # Background: linear colour gradient along a random direction, dark-ish.
    theta = rng.uniform(0, 2 * np.pi)
    ramp = (xs * np.cos(theta) + ys * np.sin(theta)) / size
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-6)
    c0 = rng.uniform(-0.9, -0.1, size=3).astype(np.float32)
    c1 = rng.uniform(-0.9, -0.1, size=3).astype(np.float32)
    img = c0[:, None, None] + (c1 - c0)[:, None, None] * ramp[None]

    # Blob: bright ellipse, random centre/radii/orientation.
    cx = rng.uniform(0.3, 0.7) * size
    cy = rng.uniform(0.3, 0.7) * size
    rx = rng.uniform(0.22, 0.38) * size
    ry = rng.uniform(0.22, 0.38) * size
    phi = rng.uniform(0, np.pi)
    dx, dy = xs - cx, ys - cy
    u = dx * np.cos(phi) + dy * np.sin(phi)
    v = -dx * np.sin(phi) + dy * np.cos(phi)
    blob = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    fill = rng.uniform(0.25, 0.85, size=3).astype(np.float32)
    img_a = img.copy()
    img_a[:, blob] = fill[:, None]

    # Stripes: fixed 45-degree orientation and period, random phase, random
    # contrast. Contrast near zero makes the B variant genuinely ambiguous.
    phase = rng.integers(0, STRIPE_PERIOD)
    stripe_lines = ((xs + ys).astype(np.int64) + phase) % STRIPE_PERIOD < STRIPE_DUTY
    stripe_mask = stripe_lines & blob
    contrast = rng.uniform(0.15, 1.0)
    img_b = img_a.copy()
    stripe_color = np.clip(fill - 1.1 * contrast, -1.0, 1.0).astype(np.float32)
    img_b[:, stripe_mask] = stripe_color[:, None]

    a = torch.from_numpy(np.clip(img_a, -1.0, 1.0).copy())
    b = torch.from_numpy(np.clip(img_b, -1.0, 1.0).copy())
    return a.float(), b.float()


def _synth_example(spec: DatasetSpec, index: int, label: str) -> LabeledExample:
    a, b = render_texture_pair(spec.image_size, spec.seed, index)
    image = a if label == MAJORITY else b
    return LabeledExample(image, label, f"synthetic:{spec.seed}:{index}")


def synth_texture_dataset(spec: DatasetSpec) -> ImbalancedDataset:
    """Deterministic two-texture dataset for desk-scale experiments.

    Geometry indices are allocated sequentially per split, so no source
    geometry appears in more than one of train/val/test.
    """
    if spec.image_size < 16:
        raise ConfigurationError("image_size below 16 cannot resolve the textures")
    counter = 0

    def take(n: int, label: str) -> list[LabeledExample]:
        nonlocal counter
        out = [_synth_example(spec, counter + i, label) for i in range(n)]
        counter += n
        return out

    train_a = take(spec.n_majority, MAJORITY)
    train_b = take(spec.n_minority, MINORITY)
    val = take(spec.val_per_class, MAJORITY) + take(spec.val_per_class, MINORITY)
    test = take(spec.test_per_class, MAJORITY) + take(spec.test_per_class, MINORITY)
    return ImbalancedDataset(train_a=train_a, train_b=train_b, val=val, test=test)


def balanced_synth_dataset(
    n_per_class: int, image_size: int, seed: int, offset: int = 1_000_000
) -> list[LabeledExample]:
    """Balanced synthetic pool disjoint from any `synth_texture_dataset` split.

    Used to train the proxy scoring classifier; the index offset keeps its
    geometry identities out of the experiment's own index range.
    """
    spec = DatasetSpec(
        source="synthetic",
        n_majority=0,
        n_minority=1,
        val_per_class=0,
        test_per_class=0,
        image_size=image_size,
        seed=seed,
    )
    out = []
    for i in range(n_per_class):
        out.append(_synth_example(spec, offset + 2 * i, MAJORITY))
        out.append(_synth_example(spec, offset + 2 * i + 1, MINORITY))
    return out


# ---------------------------------------------------------------------------
# Batch schedules
# ---------------------------------------------------------------------------


def stack_images(examples: Sequence[LabeledExample]) -> torch.Tensor:
    return torch.stack([ex.image for ex in examples])


def label_tensor(examples: Sequence[LabeledExample]) -> torch.Tensor:
    """Integer labels: 0 = majority A, 1 = minority B."""
    return torch.tensor([1 if ex.label == MINORITY else 0 for ex in examples])


def batches(
    dataset: ImbalancedDataset, batch_size: int, seed: int, epoch: int
) -> Iterator[tuple[list[LabeledExample], list[LabeledExample]]]:
    """Paired same-size (batch_A, batch_B) covering every majority image once.

    The minority class is cycled: its stream is a concatenation of fresh
    shuffles, so per epoch each minority image appears ceil/floor(|A|/|B|)
    times. Order is a pure function of (seed, epoch).
    """
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    if not dataset.train_a or not dataset.train_b:
        raise CapacityError("cannot batch from an empty class")
    rng = np.random.default_rng(derive_seed(seed, "batches", epoch))
    order_a = rng.permutation(len(dataset.train_a))
    n_a, n_b = len(dataset.train_a), len(dataset.train_b)
    order_b: list[int] = []
    while len(order_b) < n_a:
        order_b.extend(rng.permutation(n_b).tolist())
    order_b = order_b[:n_a]
    for start in range(0, n_a, batch_size):
        idx_a = order_a[start : start + batch_size]
        idx_b = order_b[start : start + batch_size]
        yield (
            [dataset.train_a[i] for i in idx_a],
            [dataset.train_b[i] for i in idx_b],
        )


def classifier_batches(
    examples: Sequence[LabeledExample], batch_size: int, seed: int, epoch: int
) -> Iterator[list[LabeledExample]]:
    """Plain shuffled minibatches over a flat example list (vanilla training)."""
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    if not examples:
        raise CapacityError("cannot batch from an empty example list")
    rng = np.random.default_rng(derive_seed(seed, "clf-batches", epoch))
    order = rng.permutation(len(examples))
    for start in range(0, len(order), batch_size):
        yield [examples[i] for i in order[start : start + batch_size]]


def num_batches(n_items: int, batch_size: int) -> int:
    return math.ceil(n_items / batch_size)
