"""Training procedures: GAN pretraining, AUG mode, ALT mode, and the
plain classifier, with the shared schedule and logging machinery.

AUG keeps a pretrained translation GAN frozen and uses it as an extra
data generator for the classifier. ALT alternates: a few epochs of
classifier-only training, then a few epochs of GAN-only training in
which the classifier loss is back-propagated through the generators.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .datasets import (
    ImbalancedDataset,
    LabeledExample,
    batches,
    classifier_batches,
    label_tensor,
    stack_images,
)
from .errors import ConfigurationError, ContractViolation, DivergenceError
from .evaluation import ProxyClassifier, evaluate_classifier
from .losses import (
    GAN_LOSS_FORMS,
    LossBreakdown,
    LossWeights,
    classifier_loss_combined,
    classifier_loss_majority,
    classifier_loss_minority,
    cycle_loss,
    discriminator_loss,
    full_objective,
    generator_adversarial_loss,
    identity_loss,
)
from .models import (
    Classifier,
    GanPair,
    ModelProfile,
    build_classifier,
    build_gan_pair,
    load_checkpoint,
    parameter_digest,
    save_checkpoint,
    set_requires_grad,
)
from .seeding import derive_seed

MODES = ("vanilla_gan", "aug", "alt", "vanilla_classifier")
PHASE_CLASSIFIER = "classifier"
PHASE_GAN = "gan"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LrSchedule:
    """Constant, or constant for a while then linear decay to zero."""

    kind: str = "constant"
    constant_epochs: int = 0
    decay_epochs: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "constant_then_linear_decay"):
            raise ConfigurationError(f"unknown lr schedule {self.kind!r}")
        if self.kind == "constant_then_linear_decay" and self.decay_epochs < 1:
            raise ConfigurationError("decay_epochs must be >= 1")

    def factor(self, epoch: int) -> float:
        if self.kind == "constant":
            return 1.0
        past = epoch - self.constant_epochs
        if past <= 0:
            return 1.0
        return max(0.0, 1.0 - past / self.decay_epochs)


def constant_schedule() -> LrSchedule:
    return LrSchedule("constant")


def decay_schedule(constant_epochs: int, decay_epochs: int) -> LrSchedule:
    return LrSchedule("constant_then_linear_decay", constant_epochs, decay_epochs)


@dataclass(frozen=True)
class OptimizerConfig:
    """Optimizer choice, recorded in config so runs are self-describing."""

    name: str = "adam"
    betas: tuple[float, float] = (0.5, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.name not in ("adam", "sgd"):
            raise ConfigurationError(f"unsupported optimizer {self.name!r}")

    def build(self, params, lr: float) -> torch.optim.Optimizer:
        if self.name == "adam":
            return torch.optim.Adam(
                params, lr=lr, betas=self.betas, eps=self.eps,
                weight_decay=self.weight_decay,
            )
        return torch.optim.SGD(params, lr=lr, weight_decay=self.weight_decay)


@dataclass(frozen=True)
class TrainingConfig:
    mode: str
    total_epochs: int
    profile: ModelProfile
    seed: int
    swap_interval: int = 5
    lr: float = 2e-4
    lr_schedule: LrSchedule = field(default_factory=constant_schedule)
    batch_size: int = 1
    weights: LossWeights = field(default_factory=LossWeights)
    warm_start: str | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eq7_unweighted: bool = False
    gan_loss_form: str = "bce"
    use_image_pool: bool | None = None  # None: on for "paper", off otherwise
    checkpoint_epochs: tuple[int, ...] = ()
    val_metric: str = "acsa"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}, expected {MODES}")
        if self.gan_loss_form not in GAN_LOSS_FORMS:
            raise ConfigurationError(
                f"gan_loss_form must be one of {GAN_LOSS_FORMS}, got {self.gan_loss_form!r}"
            )
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.total_epochs < 0:
            raise ConfigurationError("total_epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.mode == "alt":
            if self.swap_interval < 1:
                raise ConfigurationError("swap_interval must be >= 1")
            if self.total_epochs % self.swap_interval != 0:
                raise ConfigurationError(
                    f"swap_interval {self.swap_interval} must divide "
                    f"total_epochs {self.total_epochs}"
                )

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_schedule.factor(epoch)

    @property
    def image_pool_enabled(self) -> bool:
        if self.use_image_pool is None:
            return self.profile.name == "paper"
        return self.use_image_pool


# Epoch budgets from the published training protocol, per dataset family.
DATASET_BUDGETS: dict[str, dict] = {
    "celeba": {
        "pretrain_epochs": 200,
        "gan_compare_epochs": 300,
        "aug_epochs": 20,
        "alt_epochs": 100,
        "swap_interval": 5,
        "lr_schedule": constant_schedule(),
        "checkpoint_epochs": (50, 100, 200, 300),
    },
    "cub": {
        "pretrain_epochs": 50,
        "gan_compare_epochs": 100,
        "aug_epochs": 20,
        "alt_epochs": 50,
        "swap_interval": 5,
        "lr_schedule": decay_schedule(50, 150),
        "checkpoint_epochs": (50, 100),
    },
    "h2z": {
        "pretrain_epochs": 50,
        "gan_compare_epochs": 100,
        "aug_epochs": 20,
        "alt_epochs": 50,
        "swap_interval": 5,
        "lr_schedule": decay_schedule(50, 150),
        "checkpoint_epochs": (50, 100),
    },
}


def dataset_budgets(name: str, scale: float = 1.0) -> dict:
    """Published budgets, optionally scaled down for desk-size runs.

    Epoch counts are rounded up to at least 1; the alternating budget is
    rounded to a positive multiple of the swap interval so the phase
    arithmetic stays valid.
    """
    try:
        base = DATASET_BUDGETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown dataset family {name!r}, expected {sorted(DATASET_BUDGETS)}"
        ) from None
    if scale <= 0:
        raise ConfigurationError("budget scale must be positive")
    if scale == 1.0:
        return dict(base)
    out = dict(base)
    for key in ("pretrain_epochs", "gan_compare_epochs", "aug_epochs"):
        out[key] = max(1, round(base[key] * scale))
    swap = base["swap_interval"]
    out["alt_epochs"] = max(swap, round(base["alt_epochs"] * scale / swap) * swap)
    out["checkpoint_epochs"] = tuple(
        sorted({max(1, round(e * scale)) for e in base["checkpoint_epochs"]})
    )
    sched = base["lr_schedule"]
    if sched.kind == "constant_then_linear_decay":
        out["lr_schedule"] = decay_schedule(
            max(1, round(sched.constant_epochs * scale)),
            max(1, round(sched.decay_epochs * scale)),
        )
    return out


# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------


@dataclass
class LogEntry:
    epoch: int
    phase: str
    losses: dict[str, float]
    val: dict[str, float]
    lr: float
    wall_clock: float
    seed: int
    digests: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "phase": self.phase,
            "losses": self.losses,
            "val": self.val,
            "lr": self.lr,
            "wall_clock": self.wall_clock,
            "seed": self.seed,
            "digests": self.digests,
        }


@dataclass
class TrainingLog:
    entries: list[LogEntry] = field(default_factory=list)

    def append(self, entry: LogEntry) -> None:
        if self.entries and entry.epoch <= self.entries[-1].epoch:
            raise ContractViolation("log epochs must be strictly increasing")
        self.entries.append(entry)

    def phases(self) -> list[str]:
        """Phase tags compressed to one per swap block, in order."""
        out: list[str] = []
        for e in self.entries:
            if not out or out[-1] != e.phase:
                out.append(e.phase)
        return out

    def write_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "TrainingLog":
        log = cls()
        with open(path) as fh:
            for line in fh:
                d = json.loads(line)
                log.append(LogEntry(**d))
        return log


@dataclass
class EpochRecord:
    """One classifier snapshot eligible for best-on-validation selection."""

    epoch: int
    metrics: dict[str, float]
    state: dict | str  # in-memory state dict or a checkpoint path


def select_best(records: Sequence[EpochRecord], metric: str = "acsa") -> EpochRecord:
    """Record with the highest validation metric; ties go to the earliest."""
    if not records:
        raise ContractViolation("no records to select from")
    best = records[0]
    for rec in records[1:]:
        if rec.metrics[metric] > best.metrics[metric]:
            best = rec
    return best


def load_state_into(classifier: Classifier, state: dict | str) -> None:
    if isinstance(state, (str, Path)):
        payload = torch.load(state, map_location="cpu", weights_only=False)
        classifier.load_state_dict(payload["models"]["classifier"])
    else:
        classifier.load_state_dict(state)


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------


class ImagePool:
    """History buffer of generated images for discriminator updates.

    With probability 1/2 a query returns a stored image and stores the
    new one instead; otherwise the new image passes through.
    """

    def __init__(self, capacity: int, seed: int):
        self.capacity = capacity
        self.images: list[torch.Tensor] = []
        self.rng = np.random.default_rng(derive_seed(seed, "image-pool"))

    def query(self, batch: torch.Tensor) -> torch.Tensor:
        if self.capacity == 0:
            return batch
        out = []
        for img in batch:
            img = img.detach().unsqueeze(0)
            if len(self.images) < self.capacity:
                self.images.append(img)
                out.append(img)
            elif self.rng.uniform() > 0.5:
                idx = int(self.rng.integers(len(self.images)))
                out.append(self.images[idx])
                self.images[idx] = img
            else:
                out.append(img)
        return torch.cat(out)


def _set_lr(optimizers: Sequence[torch.optim.Optimizer], lr: float) -> None:
    for opt in optimizers:
        for group in opt.param_groups:
            group["lr"] = lr


def _require_finite(value: torch.Tensor, what: str, last_checkpoint) -> None:
    if not torch.isfinite(value):
        raise DivergenceError(
            f"{what} became non-finite ({float(value.detach())})",
            last_checkpoint=last_checkpoint,
        )


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


class _LossMeter:
    def __init__(self):
        self.sums: dict[str, list[float]] = {}

    def add(self, **named: float) -> None:
        for k, v in named.items():
            if isinstance(v, torch.Tensor):
                v = v.detach()
            self.sums.setdefault(k, []).append(float(v))

    def means(self) -> dict[str, float]:
        return {k: _mean(v) for k, v in sorted(self.sums.items())}


def _resolve_gan(
    gan: GanPair | str | Path, profile: ModelProfile, seed: int
) -> GanPair:
    if isinstance(gan, GanPair):
        if gan.profile.name != profile.name:
            raise ConfigurationError(
                f"GAN was built with profile {gan.profile.name!r}, "
                f"run requested {profile.name!r}"
            )
        return gan
    pair = build_gan_pair(profile, seed)
    load_checkpoint(gan, models=pair.modules_by_name(), expect_profile=profile.name)
    return pair


def _gan_digests(pair: GanPair) -> dict[str, str]:
    return {k: parameter_digest(m) for k, m in pair.modules_by_name().items()}


def _snapshot_gan(pair: GanPair, config: TrainingConfig, epoch: int, out_dir: Path | None):
    """Last-good state for divergence recovery: file if possible, else memory."""
    if out_dir is not None:
        path = out_dir / "last_good.pt"
        save_checkpoint(
            path, profile=config.profile, seed=config.seed, epoch=epoch,
            models=pair.modules_by_name(),
        )
        return str(path)
    return {
        "epoch": epoch,
        "models": {k: copy.deepcopy(m.state_dict()) for k, m in pair.modules_by_name().items()},
    }


# ---------------------------------------------------------------------------
# GAN pretraining
# ---------------------------------------------------------------------------


def _gan_batch_update(
    pair: GanPair,
    real_a: torch.Tensor,
    real_b: torch.Tensor,
    opt_g: torch.optim.Optimizer,
    opt_da: torch.optim.Optimizer,
    opt_db: torch.optim.Optimizer,
    weights: LossWeights,
    pools: tuple[ImagePool, ImagePool] | None,
    last_checkpoint,
    classifier: Classifier | None = None,
    eq7_unweighted: bool = False,
    gan_loss_form: str = "bce",
) -> dict[str, float]:
    """One generator update then both discriminator updates.

    With ``classifier`` given (ALT GAN phase), the frozen classifier's
    loss terms join the generator objective and push gradients through
    both generators.
    """
    fake_b = pair.g_ab(real_a)
    fake_a = pair.g_ba(real_b)
    rec_a = pair.g_ba(fake_b)
    rec_b = pair.g_ab(fake_a)
    idt_b = pair.g_ab(real_b)
    idt_a = pair.g_ba(real_a)

    parts = LossBreakdown(
        gan_ab=generator_adversarial_loss(pair.d_b(fake_b), gan_loss_form),
        gan_ba=generator_adversarial_loss(pair.d_a(fake_a), gan_loss_form),
        cyc_a=cycle_loss(rec_a, real_a),
        cyc_b=cycle_loss(rec_b, real_b),
        ide=identity_loss(idt_b, real_b, idt_a, real_a),
        cls_a=torch.tensor(0.0),
        cls_b=torch.tensor(0.0),
    )
    if classifier is None:
        g_total = (
            parts.gan_ab
            + parts.gan_ba
            + weights.beta * (parts.cyc_a + parts.cyc_b)
            + weights.alpha * parts.ide
        )
        parts.total = g_total
    else:
        with torch.no_grad():
            z_real_b = classifier.minority_probability(real_b)
            z_real_a = classifier.minority_probability(real_a)
        z_fake_b = classifier.minority_probability(fake_b)
        z_fake_a = classifier.minority_probability(fake_a)
        parts.cls_b = classifier_loss_minority(z_real_b, z_fake_b)
        parts.cls_a = classifier_loss_majority(z_real_a, z_fake_a)
        g_total = full_objective(parts, weights, eq7_unweighted)
    _require_finite(g_total, "generator loss", last_checkpoint)
    opt_g.zero_grad()
    g_total.backward()
    opt_g.step()

    fake_a_d = fake_a.detach()
    fake_b_d = fake_b.detach()
    if pools is not None:
        fake_a_d = pools[0].query(fake_a_d)
        fake_b_d = pools[1].query(fake_b_d)
    loss_da = discriminator_loss(pair.d_a(real_a), pair.d_a(fake_a_d), gan_loss_form)
    _require_finite(loss_da, "discriminator A loss", last_checkpoint)
    opt_da.zero_grad()
    loss_da.backward()
    opt_da.step()
    loss_db = discriminator_loss(pair.d_b(real_b), pair.d_b(fake_b_d), gan_loss_form)
    _require_finite(loss_db, "discriminator B loss", last_checkpoint)
    opt_db.zero_grad()
    loss_db.backward()
    opt_db.step()

    out = {k: v for k, v in parts.detached().items() if k not in ("cls_a", "cls_b")}
    out["g_total"] = float(g_total.detach())
    out.pop("total", None)
    if classifier is not None:
        out["cls_a"] = float(parts.cls_a.detach())
        out["cls_b"] = float(parts.cls_b.detach())
    out["d_a"] = float(loss_da.detach())
    out["d_b"] = float(loss_db.detach())
    return out


def pretrain_cyclegan(
    ds: ImbalancedDataset,
    config: TrainingConfig,
    out_dir: str | Path | None = None,
) -> tuple[GanPair, TrainingLog]:
    """Train the translation GAN alone on the imbalanced data.

    Optimizes the adversarial, cycle, and identity losses; saves
    checkpoints at the configured epoch marks when ``out_dir`` is given.
    Raises a divergence error carrying the last good checkpoint if any
    loss goes non-finite.
    """
    if config.mode != "vanilla_gan":
        raise ConfigurationError(f"pretrain_cyclegan needs mode vanilla_gan, got {config.mode!r}")
    out_dir = Path(out_dir) if out_dir is not None else None
    torch.manual_seed(derive_seed(config.seed, "torch", "pretrain") % 2**32)
    pair = build_gan_pair(config.profile, config.seed)
    weights = replace(config.weights, gamma=ds.gamma)
    opt_g = config.optimizer.build(pair.generator_parameters(), config.lr)
    opt_da = config.optimizer.build(pair.d_a.parameters(), config.lr)
    opt_db = config.optimizer.build(pair.d_b.parameters(), config.lr)
    pools = None
    if config.image_pool_enabled:
        pools = (ImagePool(50, derive_seed(config.seed, "pool-a")),
                 ImagePool(50, derive_seed(config.seed, "pool-b")))
    log = TrainingLog()
    last_good = _snapshot_gan(pair, config, -1, out_dir)
    pair.train()
    for epoch in range(config.total_epochs):
        start = time.perf_counter()
        lr = config.lr_at(epoch)
        _set_lr([opt_g, opt_da, opt_db], lr)
        meter = _LossMeter()
        for batch_a, batch_b in batches(ds, config.batch_size, config.seed, epoch):
            losses = _gan_batch_update(
                pair, stack_images(batch_a), stack_images(batch_b),
                opt_g, opt_da, opt_db, weights, pools, last_good,
                gan_loss_form=config.gan_loss_form,
            )
            meter.add(**losses)
        last_good = _snapshot_gan(pair, config, epoch, out_dir)
        log.append(LogEntry(
            epoch=epoch,
            phase=PHASE_GAN,
            losses=meter.means(),
            val={},
            lr=lr,
            wall_clock=time.perf_counter() - start,
            seed=config.seed,
            digests=_gan_digests(pair),
        ))
        if out_dir is not None and (epoch + 1) in config.checkpoint_epochs:
            save_checkpoint(
                out_dir / f"gan_epoch_{epoch + 1:04d}.pt",
                profile=config.profile, seed=config.seed, epoch=epoch,
                models=pair.modules_by_name(),
            )
    if out_dir is not None:
        save_checkpoint(
            out_dir / "gan_final.pt",
            profile=config.profile, seed=config.seed,
            epoch=config.total_epochs - 1,
            models=pair.modules_by_name(),
        )
        log.write_jsonl(out_dir / "pretrain_log.jsonl")
    return pair, log


# ---------------------------------------------------------------------------
# Classifier phases
# ---------------------------------------------------------------------------


def _classifier_epoch(
    classifier: Classifier,
    pair: GanPair,
    ds: ImbalancedDataset,
    config: TrainingConfig,
    opt: torch.optim.Optimizer,
    epoch: int,
) -> dict[str, float]:
    """One AUG-style epoch: translated batches, classifier-only updates."""
    gamma = ds.gamma
    meter = _LossMeter()
    classifier.train()
    for batch_a, batch_b in batches(ds, config.batch_size, config.seed, epoch):
        real_a = stack_images(batch_a)
        real_b = stack_images(batch_b)
        with torch.no_grad():
            fake_b = pair.g_ab(real_a)
            fake_a = pair.g_ba(real_b)
        loss_b = classifier_loss_minority(
            classifier.minority_probability(real_b),
            classifier.minority_probability(fake_b),
        )
        loss_a = classifier_loss_majority(
            classifier.minority_probability(real_a),
            classifier.minority_probability(fake_a),
        )
        loss = classifier_loss_combined(loss_b, loss_a, gamma)
        _require_finite(loss, "classifier loss", None)
        opt.zero_grad()
        loss.backward()
        opt.step()
        meter.add(cls=loss, cls_a=loss_a, cls_b=loss_b)
    return meter.means()


def _record_classifier_epoch(
    records: list[EpochRecord],
    classifier: Classifier,
    epoch: int,
    metrics: dict[str, float],
    out_dir: Path | None,
    config: TrainingConfig,
) -> None:
    if out_dir is not None:
        path = out_dir / f"classifier_epoch_{epoch:04d}.pt"
        save_checkpoint(
            path, profile=config.profile, seed=config.seed, epoch=epoch,
            models={"classifier": classifier},
        )
        state: dict | str = str(path)
    else:
        state = copy.deepcopy(classifier.state_dict())
    records.append(EpochRecord(epoch=epoch, metrics=metrics, state=state))


def train_aug(
    ds: ImbalancedDataset,
    gan_checkpoint: GanPair | str | Path,
    config: TrainingConfig,
    out_dir: str | Path | None = None,
) -> tuple[Classifier, TrainingLog, list[EpochRecord]]:
    """Classifier training with a frozen pretrained GAN as data generator.

    Each step pairs a majority batch with a (cycled) minority batch, adds
    their translations, and minimizes the gamma-weighted classifier loss.
    The GAN receives no gradient and its parameters never change.
    """
    if config.mode != "aug":
        raise ConfigurationError(f"train_aug needs mode aug, got {config.mode!r}")
    out_dir = Path(out_dir) if out_dir is not None else None
    torch.manual_seed(derive_seed(config.seed, "torch", "aug") % 2**32)
    pair = _resolve_gan(gan_checkpoint, config.profile, config.seed)
    pair.eval()
    for m in pair.modules_by_name().values():
        set_requires_grad(m, False)
    classifier = build_classifier(config.profile, derive_seed(config.seed, "classifier"))
    opt = config.optimizer.build(classifier.parameters(), config.lr)
    log = TrainingLog()
    records: list[EpochRecord] = []
    for epoch in range(config.total_epochs):
        start = time.perf_counter()
        lr = config.lr_at(epoch)
        _set_lr([opt], lr)
        losses = _classifier_epoch(classifier, pair, ds, config, opt, epoch)
        val = evaluate_classifier(classifier, ds.val)
        _record_classifier_epoch(records, classifier, epoch, val, out_dir, config)
        log.append(LogEntry(
            epoch=epoch,
            phase=PHASE_CLASSIFIER,
            losses=losses,
            val=val,
            lr=lr,
            wall_clock=time.perf_counter() - start,
            seed=config.seed,
            digests={"classifier": parameter_digest(classifier), **_gan_digests(pair)},
        ))
    for m in pair.modules_by_name().values():
        set_requires_grad(m, True)
    if out_dir is not None:
        log.write_jsonl(out_dir / "aug_log.jsonl")
    return classifier, log, records


def train_alt(
    ds: ImbalancedDataset,
    gan_checkpoint: GanPair | str | Path,
    config: TrainingConfig,
    out_dir: str | Path | None = None,
) -> tuple[Classifier, GanPair, TrainingLog, list[EpochRecord]]:
    """Alternating training: classifier phases and GAN phases.

    Phases are ``swap_interval`` epochs each, starting with the
    classifier. Classifier phases behave exactly like AUG. GAN phases
    freeze the classifier and minimize the full objective, including the
    classifier terms, whose gradients flow into both generators; the
    discriminators keep training as in pretraining.
    """
    if config.mode != "alt":
        raise ConfigurationError(f"train_alt needs mode alt, got {config.mode!r}")
    out_dir = Path(out_dir) if out_dir is not None else None
    torch.manual_seed(derive_seed(config.seed, "torch", "alt") % 2**32)
    pair = _resolve_gan(gan_checkpoint, config.profile, config.seed)
    weights = replace(config.weights, gamma=ds.gamma)
    classifier = build_classifier(config.profile, derive_seed(config.seed, "classifier"))
    opt_cls = config.optimizer.build(classifier.parameters(), config.lr)
    opt_g = config.optimizer.build(pair.generator_parameters(), config.lr)
    opt_da = config.optimizer.build(pair.d_a.parameters(), config.lr)
    opt_db = config.optimizer.build(pair.d_b.parameters(), config.lr)
    pools = None
    if config.image_pool_enabled:
        pools = (ImagePool(50, derive_seed(config.seed, "pool-a")),
                 ImagePool(50, derive_seed(config.seed, "pool-b")))
    log = TrainingLog()
    records: list[EpochRecord] = []
    last_good = _snapshot_gan(pair, config, -1, out_dir)
    for epoch in range(config.total_epochs):
        start = time.perf_counter()
        lr = config.lr_at(epoch)
        phase = (
            PHASE_CLASSIFIER
            if (epoch // config.swap_interval) % 2 == 0
            else PHASE_GAN
        )
        if phase == PHASE_CLASSIFIER:
            _set_lr([opt_cls], lr)
            pair.eval()
            for m in pair.modules_by_name().values():
                set_requires_grad(m, False)
            losses = _classifier_epoch(classifier, pair, ds, config, opt_cls, epoch)
            for m in pair.modules_by_name().values():
                set_requires_grad(m, True)
        else:
            _set_lr([opt_g, opt_da, opt_db], lr)
            pair.train()
            classifier.eval()
            set_requires_grad(classifier, False)
            meter = _LossMeter()
            for batch_a, batch_b in batches(ds, config.batch_size, config.seed, epoch):
                batch_losses = _gan_batch_update(
                    pair, stack_images(batch_a), stack_images(batch_b),
                    opt_g, opt_da, opt_db, weights, pools, last_good,
                    classifier=classifier, eq7_unweighted=config.eq7_unweighted,
                    gan_loss_form=config.gan_loss_form,
                )
                meter.add(**batch_losses)
            set_requires_grad(classifier, True)
            losses = meter.means()
        last_good = _snapshot_gan(pair, config, epoch, out_dir)
        val = evaluate_classifier(classifier, ds.val)
        _record_classifier_epoch(records, classifier, epoch, val, out_dir, config)
        log.append(LogEntry(
            epoch=epoch,
            phase=phase,
            losses=losses,
            val=val,
            lr=lr,
            wall_clock=time.perf_counter() - start,
            seed=config.seed,
            digests={"classifier": parameter_digest(classifier), **_gan_digests(pair)},
        ))
    if out_dir is not None:
        save_checkpoint(
            out_dir / "alt_gan_final.pt",
            profile=config.profile, seed=config.seed,
            epoch=config.total_epochs - 1,
            models=pair.modules_by_name(),
        )
        log.write_jsonl(out_dir / "alt_log.jsonl")
    return classifier, pair, log, records


def train_vanilla_classifier(
    ds: ImbalancedDataset,
    config: TrainingConfig,
    class_weights: tuple[float, float] = (1.0, 1.0),
    out_dir: str | Path | None = None,
    train_examples: Sequence[LabeledExample] | None = None,
) -> tuple[Classifier, TrainingLog, list[EpochRecord]]:
    """Plain cross-entropy training on the (possibly rebalanced) data.

    Without weights and resampling this is the vanilla classifier; the
    rebalancing baselines enter through ``class_weights`` and/or a
    substituted ``train_examples`` list.
    """
    if config.mode != "vanilla_classifier":
        raise ConfigurationError(
            f"train_vanilla_classifier needs mode vanilla_classifier, got {config.mode!r}"
        )
    out_dir = Path(out_dir) if out_dir is not None else None
    torch.manual_seed(derive_seed(config.seed, "torch", "vanilla") % 2**32)
    examples = list(train_examples) if train_examples is not None else ds.train
    classifier = build_classifier(config.profile, derive_seed(config.seed, "classifier"))
    opt = config.optimizer.build(classifier.parameters(), config.lr)
    weight = torch.tensor(class_weights, dtype=torch.float32)
    log = TrainingLog()
    records: list[EpochRecord] = []
    for epoch in range(config.total_epochs):
        start = time.perf_counter()
        lr = config.lr_at(epoch)
        _set_lr([opt], lr)
        meter = _LossMeter()
        classifier.train()
        for batch in classifier_batches(examples, config.batch_size, config.seed, epoch):
            logits = classifier(stack_images(batch))
            loss = F.cross_entropy(logits, label_tensor(batch), weight=weight)
            _require_finite(loss, "cross-entropy loss", None)
            opt.zero_grad()
            loss.backward()
            opt.step()
            meter.add(ce=loss)
        val = evaluate_classifier(classifier, ds.val)
        _record_classifier_epoch(records, classifier, epoch, val, out_dir, config)
        log.append(LogEntry(
            epoch=epoch,
            phase=PHASE_CLASSIFIER,
            losses=meter.means(),
            val=val,
            lr=lr,
            wall_clock=time.perf_counter() - start,
            seed=config.seed,
            digests={"classifier": parameter_digest(classifier)},
        ))
    if out_dir is not None:
        log.write_jsonl(out_dir / "classifier_log.jsonl")
    return classifier, log, records


# ---------------------------------------------------------------------------
# Proxy classifier for translation scoring
# ---------------------------------------------------------------------------


def train_proxy(
    pool: Sequence[LabeledExample],
    profile: ModelProfile,
    seed: int,
    epochs: int = 30,
    batch_size: int = 16,
    lr: float = 2e-4,
    holdout_fraction: float = 0.25,
) -> ProxyClassifier:
    """Train the scoring classifier on a balanced pool and measure its
    accuracy on a held-out part of the same pool."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigurationError("holdout_fraction must be in (0, 1)")
    torch.manual_seed(derive_seed(seed, "torch", "proxy") % 2**32)
    rng = np.random.default_rng(derive_seed(seed, "proxy-split"))
    order = rng.permutation(len(pool))
    n_holdout = max(1, int(len(pool) * holdout_fraction))
    holdout = [pool[i] for i in order[:n_holdout]]
    train = [pool[i] for i in order[n_holdout:]]
    if not train:
        raise ConfigurationError("proxy pool too small for the holdout split")
    classifier = build_classifier(profile, derive_seed(seed, "proxy"))
    opt = torch.optim.Adam(classifier.parameters(), lr=lr, betas=(0.5, 0.999))
    classifier.train()
    for epoch in range(epochs):
        for batch in classifier_batches(train, batch_size, seed, epoch):
            loss = F.cross_entropy(classifier(stack_images(batch)), label_tensor(batch))
            opt.zero_grad()
            loss.backward()
            opt.step()
    acc = evaluate_classifier(classifier, holdout)["accuracy"]
    return ProxyClassifier(classifier=classifier, real_accuracy=acc)
