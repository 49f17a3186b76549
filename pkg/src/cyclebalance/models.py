"""Generators, discriminators, and the classifier, with size profiles.

Two profiles are provided. "paper" is the full-scale configuration
(256 px, 9 residual blocks, 5-layer discriminator, FC 1024/256).
"desk" is a reduced configuration with the same topology for small
images and CPU-scale experiments (32 px, 3 residual blocks, 3-layer
discriminator, FC 128/64).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from .errors import ConfigurationError
from .seeding import derive_seed

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelProfile:
    """Architecture sizes shared by all three networks."""

    name: str
    image_size: int
    generator_residual_blocks: int
    discriminator_layers: int
    classifier_fc_sizes: tuple[int, int]
    generator_base_channels: int = 64
    discriminator_base_channels: int = 64
    dropout_rate: float = 0.5
    init_std: float = 0.02
    channels: int = 3

    def __post_init__(self):
        if self.image_size < 16 or self.image_size % 4 != 0:
            raise ConfigurationError(
                "image_size must be >= 16 and divisible by 4 (two stride-2 stages)"
            )
        if self.generator_residual_blocks < 1:
            raise ConfigurationError("need at least one residual block")
        if self.discriminator_layers < 3:
            raise ConfigurationError("discriminator needs at least 3 layers")
        min_grid = self.image_size // 2 ** (self.discriminator_layers - 2)
        if min_grid < 4:
            raise ConfigurationError("discriminator downsamples below its kernel size")

    @property
    def patch_grid(self) -> int:
        """Side length of the discriminator's output score grid."""
        return self.image_size // 2 ** (self.discriminator_layers - 2) - 2


PROFILES: dict[str, ModelProfile] = {
    "paper": ModelProfile(
        name="paper",
        image_size=256,
        generator_residual_blocks=9,
        discriminator_layers=5,
        classifier_fc_sizes=(1024, 256),
    ),
    "desk": ModelProfile(
        name="desk",
        image_size=32,
        generator_residual_blocks=3,
        discriminator_layers=3,
        classifier_fc_sizes=(128, 64),
        generator_base_channels=16,
        discriminator_base_channels=16,
    ),
}


def get_profile(name: str) -> ModelProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown profile {name!r}, expected one of {sorted(PROFILES)}"
        ) from None


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class Generator(nn.Module):
    """Image-to-image translator: two stride-2 downsampling convolutions,
    a residual trunk, and two fractionally-strided upsampling convolutions."""

    def __init__(self, profile: ModelProfile):
        super().__init__()
        b, c = profile.generator_base_channels, profile.channels
        layers: list[nn.Module] = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(c, b, 7),
            nn.InstanceNorm2d(b),
            nn.ReLU(inplace=True),
        ]
        ch = b
        for _ in range(2):
            layers += [
                nn.Conv2d(ch, ch * 2, 3, stride=2, padding=1),
                nn.InstanceNorm2d(ch * 2),
                nn.ReLU(inplace=True),
            ]
            ch *= 2
        layers += [ResidualBlock(ch) for _ in range(profile.generator_residual_blocks)]
        for _ in range(2):
            layers += [
                nn.ConvTranspose2d(ch, ch // 2, 3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(ch // 2),
                nn.ReLU(inplace=True),
            ]
            ch //= 2
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(ch, c, 7), nn.Tanh()]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


def _feature_trunk(profile: ModelProfile) -> tuple[nn.Sequential, int]:
    """Strided conv stack shared by the discriminator and the classifier.

    Layer i has base * 2^i channels, kernel 4, stride 2 except the last
    (stride 1), instance norm from the second layer on, LeakyReLU 0.2.
    Returns the stack and its output channel count.
    """
    b, c = profile.discriminator_base_channels, profile.channels
    n_feature = profile.discriminator_layers - 1
    layers: list[nn.Module] = []
    in_ch = c
    out_ch = b
    for i in range(n_feature):
        stride = 2 if i < n_feature - 1 else 1
        layers.append(nn.Conv2d(in_ch, out_ch, 4, stride=stride, padding=1))
        if i > 0:
            layers.append(nn.InstanceNorm2d(out_ch))
        layers.append(nn.LeakyReLU(0.2, inplace=True))
        in_ch = out_ch
        out_ch *= 2
    return nn.Sequential(*layers), in_ch


class Discriminator(nn.Module):
    """Patch discriminator: a grid of per-patch real probabilities."""

    def __init__(self, profile: ModelProfile):
        super().__init__()
        trunk, ch = _feature_trunk(profile)
        self.model = nn.Sequential(
            trunk, nn.Conv2d(ch, 1, 4, stride=1, padding=1), nn.Sigmoid()
        )

    def forward(self, x):
        return self.model(x)


class Classifier(nn.Module):
    """Binary classifier on the discriminator trunk.

    Global average pooling bridges the conv features to the two hidden
    fully connected layers; dropout sits on the last hidden layer. The
    forward pass returns 2 logits (index 0 majority, index 1 minority).
    """

    def __init__(self, profile: ModelProfile):
        super().__init__()
        self.trunk, ch = _feature_trunk(profile)
        fc1, fc2 = profile.classifier_fc_sizes
        self.head = nn.Sequential(
            nn.Linear(ch, fc1),
            nn.ReLU(inplace=True),
            nn.Linear(fc1, fc2),
            nn.ReLU(inplace=True),
            nn.Dropout(profile.dropout_rate),
            nn.Linear(fc2, 2),
        )

    def forward(self, x):
        feats = self.trunk(x)
        pooled = feats.mean(dim=(2, 3))
        return self.head(pooled)

    def minority_probability(self, x) -> torch.Tensor:
        """z(x): probability of the minority class, shape (batch,)."""
        return torch.softmax(self.forward(x), dim=1)[:, 1]


@dataclass
class GanPair:
    """Both translators and both discriminators of one translation GAN."""

    g_ab: Generator
    g_ba: Generator
    d_a: Discriminator
    d_b: Discriminator
    profile: ModelProfile

    def generator_parameters(self):
        yield from self.g_ab.parameters()
        yield from self.g_ba.parameters()

    def modules_by_name(self) -> dict[str, nn.Module]:
        return {"g_ab": self.g_ab, "g_ba": self.g_ba, "d_a": self.d_a, "d_b": self.d_b}

    def train(self):
        for m in self.modules_by_name().values():
            m.train()

    def eval(self):
        for m in self.modules_by_name().values():
            m.eval()


def set_requires_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def init_weights(module: nn.Module, std: float, seed: int) -> None:
    """Gaussian N(0, std) init for conv and linear weights, zero biases.

    Deterministic: parameters are visited in registration order and drawn
    from a dedicated generator, so the same seed gives identical weights.
    """
    gen = torch.Generator().manual_seed(derive_seed(seed, "init") % 2**32)
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            m.weight.data.normal_(0.0, std, generator=gen)
            if m.bias is not None:
                m.bias.data.zero_()


def build_generator(profile: ModelProfile, seed: int, tag: str = "g") -> Generator:
    g = Generator(profile)
    init_weights(g, profile.init_std, derive_seed(seed, "model", tag))
    return g


def build_discriminator(profile: ModelProfile, seed: int, tag: str = "d") -> Discriminator:
    d = Discriminator(profile)
    init_weights(d, profile.init_std, derive_seed(seed, "model", tag))
    return d


def build_classifier(profile: ModelProfile, seed: int, tag: str = "cls") -> Classifier:
    c = Classifier(profile)
    init_weights(c, profile.init_std, derive_seed(seed, "model", tag))
    return c


def build_gan_pair(profile: ModelProfile, seed: int) -> GanPair:
    return GanPair(
        g_ab=build_generator(profile, seed, "g_ab"),
        g_ba=build_generator(profile, seed, "g_ba"),
        d_a=build_discriminator(profile, seed, "d_a"),
        d_b=build_discriminator(profile, seed, "d_b"),
        profile=profile,
    )


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def parameter_digest(module: nn.Module) -> str:
    """sha256 over the state dict: name, dtype, shape, and raw bytes of each
    tensor in sorted name order. Equal digests mean bit-identical weights."""
    h = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(str(tuple(t.shape)).encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(
    path: str | Path,
    *,
    profile: ModelProfile,
    seed: int,
    epoch: int,
    models: dict[str, nn.Module],
    optimizers: dict[str, torch.optim.Optimizer] | None = None,
    extra: dict | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "profile": profile.name,
        "seed": seed,
        "epoch": epoch,
        "models": {k: m.state_dict() for k, m in models.items()},
        "optimizers": {k: o.state_dict() for k, o in (optimizers or {}).items()},
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(
    path: str | Path,
    *,
    models: dict[str, nn.Module],
    optimizers: dict[str, torch.optim.Optimizer] | None = None,
    expect_profile: str | None = None,
) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"checkpoint {path} does not exist")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ConfigurationError(
            f"checkpoint format {version!r} not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    if expect_profile is not None and payload["profile"] != expect_profile:
        raise ConfigurationError(
            f"checkpoint was written with profile {payload['profile']!r}, "
            f"run requested {expect_profile!r}"
        )
    for k, m in models.items():
        m.load_state_dict(payload["models"][k])
    for k, o in (optimizers or {}).items():
        o.load_state_dict(payload["optimizers"][k])
    return payload
