import pytest
import torch

from cyclebalance.errors import ConfigurationError
from cyclebalance.models import (
    PROFILES,
    Classifier,
    Discriminator,
    GanPair,
    Generator,
    ModelProfile,
    build_classifier,
    build_gan_pair,
    get_profile,
    init_weights,
    load_checkpoint,
    parameter_count,
    parameter_digest,
    save_checkpoint,
    set_requires_grad,
)

# Frozen parameter counts, derived by closed-form layer arithmetic before
# the modules were written (conv: in*out*k^2 + out, transpose conv likewise,
# linear: in*out + out, instance norm affine-free: 0).
EXPECTED_COUNTS = {
    "desk": {"generator": 272_515, "discriminator": 9_521, "classifier": 21_618},
    "paper": {"generator": 11_378_179, "discriminator": 2_764_737, "classifier": 3_544_770},
}
# image_size / 2^(layers-2) - 2, from the kernel-4 stride arithmetic
EXPECTED_PATCH_GRID = {"desk": 14, "paper": 30}

DESK = PROFILES["desk"]


class TestProfiles:
    def test_presets_exist(self):
        assert set(PROFILES) == {"paper", "desk"}
        assert get_profile("desk") is DESK

    def test_unknown_profile(self):
        with pytest.raises(ConfigurationError):
            get_profile("huge")

    def test_paper_profile_sizes(self):
        p = PROFILES["paper"]
        assert p.image_size == 256
        assert p.generator_residual_blocks == 9
        assert p.discriminator_layers == 5
        assert p.classifier_fc_sizes == (1024, 256)
        assert p.dropout_rate == 0.5
        assert p.init_std == 0.02

    def test_patch_grid_values(self):
        for name, grid in EXPECTED_PATCH_GRID.items():
            assert PROFILES[name].patch_grid == grid

    def test_invalid_profiles_rejected(self):
        with pytest.raises(ConfigurationError):
            ModelProfile("x", 30, 3, 3, (8, 4))  # not divisible by 4
        with pytest.raises(ConfigurationError):
            ModelProfile("x", 32, 0, 3, (8, 4))
        with pytest.raises(ConfigurationError):
            ModelProfile("x", 32, 3, 2, (8, 4))
        with pytest.raises(ConfigurationError):
            ModelProfile("x", 32, 3, 6, (8, 4))  # grid collapses below kernel


class TestParameterCounts:
    @pytest.mark.parametrize("name", ["desk", "paper"])
    def test_counts_match_closed_form(self, name):
        p = PROFILES[name]
        assert parameter_count(Generator(p)) == EXPECTED_COUNTS[name]["generator"]
        assert parameter_count(Discriminator(p)) == EXPECTED_COUNTS[name]["discriminator"]
        assert parameter_count(Classifier(p)) == EXPECTED_COUNTS[name]["classifier"]


class TestForwardShapes:
    def test_generator_preserves_shape_and_range(self):
        g = Generator(DESK)
        x = torch.randn(2, 3, 32, 32)
        y = g(x)
        assert y.shape == x.shape
        assert y.min() >= -1.0 and y.max() <= 1.0  # tanh output

    def test_discriminator_patch_grid(self):
        d = Discriminator(DESK)
        out = d(torch.randn(2, 3, 32, 32))
        assert out.shape == (2, 1, 14, 14)
        assert out.min() > 0.0 and out.max() < 1.0  # sigmoid probabilities

    def test_classifier_logits_and_probability(self):
        c = Classifier(DESK)
        c.eval()
        x = torch.randn(3, 3, 32, 32)
        logits = c(x)
        assert logits.shape == (3, 2)
        z = c.minority_probability(x)
        assert z.shape == (3,)
        assert (z > 0).all() and (z < 1).all()

    def test_generator_other_valid_size(self):
        # topology is size-agnostic as long as size is divisible by 4
        p = ModelProfile("tiny", 16, 2, 3, (16, 8), 8, 8)
        assert Generator(p)(torch.randn(1, 3, 16, 16)).shape == (1, 3, 16, 16)
        assert Discriminator(p)(torch.randn(1, 3, 16, 16)).shape == (1, 1, p.patch_grid, p.patch_grid)


class TestInit:
    def test_seeded_init_deterministic(self):
        g1 = build_gan_pair(DESK, seed=11)
        g2 = build_gan_pair(DESK, seed=11)
        for k in g1.modules_by_name():
            assert parameter_digest(g1.modules_by_name()[k]) == parameter_digest(
                g2.modules_by_name()[k]
            )

    def test_different_seed_different_weights(self):
        a = build_classifier(DESK, seed=1)
        b = build_classifier(DESK, seed=2)
        assert parameter_digest(a) != parameter_digest(b)

    def test_submodels_of_pair_differ(self):
        pair = build_gan_pair(DESK, seed=5)
        assert parameter_digest(pair.g_ab) != parameter_digest(pair.g_ba)
        assert parameter_digest(pair.d_a) != parameter_digest(pair.d_b)

    def test_init_statistics(self):
        g = Generator(DESK)
        init_weights(g, std=0.02, seed=3)
        weights = torch.cat(
            [
                m.weight.detach().reshape(-1)
                for m in g.modules()
                if isinstance(m, (torch.nn.Conv2d, torch.nn.ConvTranspose2d))
            ]
        )
        assert abs(float(weights.mean())) < 0.001
        assert abs(float(weights.std()) - 0.02) < 0.001
        biases = [m.bias.detach() for m in g.modules() if isinstance(m, torch.nn.Conv2d)]
        assert all(float(b.abs().max()) == 0.0 for b in biases)

    def test_set_requires_grad(self):
        c = build_classifier(DESK, seed=0)
        set_requires_grad(c, False)
        assert all(not p.requires_grad for p in c.parameters())
        set_requires_grad(c, True)
        assert all(p.requires_grad for p in c.parameters())


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        pair = build_gan_pair(DESK, seed=7)
        opt = torch.optim.Adam(pair.generator_parameters(), lr=2e-4, betas=(0.5, 0.999))
        # step once so optimizer state is non-trivial
        loss = pair.g_ab(torch.randn(1, 3, 32, 32)).sum()
        loss.backward()
        opt.step()
        digests = {k: parameter_digest(m) for k, m in pair.modules_by_name().items()}
        path = tmp_path / "ck" / "gan.pt"
        save_checkpoint(
            path,
            profile=DESK,
            seed=7,
            epoch=3,
            models=pair.modules_by_name(),
            optimizers={"g": opt},
            extra={"note": 1},
        )
        fresh = build_gan_pair(DESK, seed=99)
        opt2 = torch.optim.Adam(fresh.generator_parameters(), lr=2e-4, betas=(0.5, 0.999))
        payload = load_checkpoint(
            path, models=fresh.modules_by_name(), optimizers={"g": opt2}, expect_profile="desk"
        )
        assert payload["epoch"] == 3
        assert payload["seed"] == 7
        assert payload["extra"] == {"note": 1}
        for k, m in fresh.modules_by_name().items():
            assert parameter_digest(m) == digests[k]

    def test_profile_mismatch_rejected(self, tmp_path):
        c = build_classifier(DESK, seed=0)
        path = tmp_path / "c.pt"
        save_checkpoint(path, profile=DESK, seed=0, epoch=0, models={"cls": c})
        with pytest.raises(ConfigurationError):
            load_checkpoint(path, models={"cls": c}, expect_profile="paper")

    def test_missing_file(self, tmp_path):
        c = build_classifier(DESK, seed=0)
        with pytest.raises(ConfigurationError):
            load_checkpoint(tmp_path / "absent.pt", models={"cls": c})

    def test_bad_format_version(self, tmp_path):
        c = build_classifier(DESK, seed=0)
        path = tmp_path / "c.pt"
        torch.save({"format_version": 999, "models": {}}, path)
        with pytest.raises(ConfigurationError):
            load_checkpoint(path, models={"cls": c})


class TestDigest:
    def test_digest_stable(self):
        c = build_classifier(DESK, seed=4)
        assert parameter_digest(c) == parameter_digest(c)

    def test_digest_sensitive_to_single_weight(self):
        c = build_classifier(DESK, seed=4)
        before = parameter_digest(c)
        with torch.no_grad():
            c.head[0].weight[0, 0] += 1e-7
        assert parameter_digest(c) != before


class TestGanPair:
    def test_pair_contents(self):
        pair = build_gan_pair(DESK, seed=1)
        assert isinstance(pair, GanPair)
        assert set(pair.modules_by_name()) == {"g_ab", "g_ba", "d_a", "d_b"}
        n_gen_params = sum(p.numel() for p in pair.generator_parameters())
        assert n_gen_params == 2 * EXPECTED_COUNTS["desk"]["generator"]

    def test_train_eval_switch(self):
        pair = build_gan_pair(DESK, seed=1)
        pair.eval()
        assert not pair.g_ab.training
        pair.train()
        assert pair.g_ab.training
