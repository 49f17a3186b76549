import math

import pytest
import torch

from cyclebalance.errors import ContractViolation, NumericalError
from cyclebalance.losses import (
    EPS,
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

# Hand-computed oracle constants (math.log on paper, frozen here).
TWO_LN_2 = 1.3862943611198906
LN_2 = 0.6931471805599453
NEG_LN_EPS = 16.11809565095832  # -ln(1e-7)
PATCH_DISC = 0.328504066972036  # real=[.9,.8], fake=[.1,.2]


def t(*vals):
    return torch.tensor(vals, dtype=torch.float64)


class TestAdversarial:
    def test_disc_loss_at_half(self):
        # -ln(0.5) - ln(0.5) = 2 ln 2
        loss = discriminator_loss(t(0.5), t(0.5))
        assert abs(float(loss) - TWO_LN_2) < 1e-12

    def test_disc_loss_patch_grid_mean(self):
        loss = discriminator_loss(t(0.9, 0.8), t(0.1, 0.2))
        assert abs(float(loss) - PATCH_DISC) < 1e-12

    def test_disc_loss_confident_correct_is_small(self):
        loss = discriminator_loss(t(0.99), t(0.01))
        assert float(loss) < 0.05

    def test_gen_loss_at_half(self):
        assert abs(float(generator_adversarial_loss(t(0.5))) - LN_2) < 1e-12

    def test_gen_loss_nonsaturating_direction(self):
        # Fooling the discriminator more should lower the generator loss.
        assert float(generator_adversarial_loss(t(0.9))) < float(
            generator_adversarial_loss(t(0.2))
        )

    def test_clamp_keeps_logs_finite(self):
        loss = discriminator_loss(t(0.0), t(1.0))
        assert math.isfinite(float(loss))
        assert abs(float(loss) - 2 * NEG_LN_EPS) < 1e-4


class TestLeastSquaresForm:
    def test_disc_loss_hand_value(self):
        # (0.8-1)^2 + 0.3^2 = 0.04 + 0.09
        loss = discriminator_loss(t(0.8), t(0.3), form="lsq")
        assert abs(float(loss) - 0.13) < 1e-12

    def test_disc_loss_patch_grid_mean(self):
        # mean[(0.9-1)^2,(0.7-1)^2] + mean[0.2^2,0.4^2] = 0.05 + 0.10
        loss = discriminator_loss(t(0.9, 0.7), t(0.2, 0.4), form="lsq")
        assert abs(float(loss) - 0.15) < 1e-12

    def test_perfect_scores_give_zero(self):
        assert float(discriminator_loss(t(1.0), t(0.0), form="lsq")) == 0.0
        assert float(generator_adversarial_loss(t(1.0), form="lsq")) == 0.0

    def test_gen_loss_hand_value(self):
        # (0.3-1)^2
        loss = generator_adversarial_loss(t(0.3), form="lsq")
        assert abs(float(loss) - 0.49) < 1e-12

    def test_gen_loss_direction(self):
        assert float(generator_adversarial_loss(t(0.9), form="lsq")) < float(
            generator_adversarial_loss(t(0.2), form="lsq")
        )

    def test_unknown_form_rejected(self):
        with pytest.raises(ContractViolation, match="gan loss form"):
            discriminator_loss(t(0.5), t(0.5), form="hinge")
        with pytest.raises(ContractViolation, match="gan loss form"):
            generator_adversarial_loss(t(0.5), form="wasserstein")


class TestCycleAndIdentity:
    def test_cycle_mean_abs(self):
        rec = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
        org = torch.zeros(2, 2)
        assert float(cycle_loss(rec, org)) == pytest.approx(2.5)

    def test_cycle_zero_at_perfect_reconstruction(self):
        x = torch.randn(2, 3, 4, 4)
        assert float(cycle_loss(x, x)) == 0.0

    def test_cycle_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            cycle_loss(torch.zeros(2, 3), torch.zeros(3, 2))

    def test_identity_sums_both_directions(self):
        b = torch.zeros(1, 2)
        gb = torch.full((1, 2), 0.5)
        a = torch.zeros(1, 2)
        ga = torch.full((1, 2), 0.25)
        assert float(identity_loss(gb, b, ga, a)) == pytest.approx(0.75)

    def test_identity_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            identity_loss(torch.zeros(2), torch.zeros(3), torch.zeros(2), torch.zeros(2))


class TestClassifierTerms:
    def test_minority_term_at_half(self):
        loss = classifier_loss_minority(t(0.5), t(0.5))
        assert abs(float(loss) - TWO_LN_2) < 1e-12

    def test_majority_term_at_half(self):
        loss = classifier_loss_majority(t(0.5), t(0.5))
        assert abs(float(loss) - TWO_LN_2) < 1e-12

    def test_majority_term_wants_low_z(self):
        # z is the minority probability: majority loss must fall as z falls.
        lo = classifier_loss_majority(t(0.1), t(0.1))
        hi = classifier_loss_majority(t(0.9), t(0.9))
        assert float(lo) < float(hi)

    def test_combined_weighting_at_gamma_18(self):
        # 0.15 + 0.90 / 18 = 0.20 exactly
        loss = classifier_loss_combined(t(0.15)[0], t(0.90)[0], gamma=18.0)
        assert float(loss) == pytest.approx(0.2, abs=1e-15)

    def test_combined_gamma_one_is_plain_sum(self):
        loss = classifier_loss_combined(t(0.3)[0], t(0.4)[0], gamma=1.0)
        assert float(loss) == pytest.approx(0.7)

    def test_combined_rejects_gamma_below_one(self):
        with pytest.raises(ContractViolation):
            classifier_loss_combined(t(0.1)[0], t(0.1)[0], gamma=0.5)

    def test_combined_derivative_wrt_majority_term(self):
        # d(combined)/d(L_A) = 1/gamma, checked analytically via autograd.
        la = torch.tensor(0.9, dtype=torch.float64, requires_grad=True)
        lb = torch.tensor(0.15, dtype=torch.float64)
        classifier_loss_combined(lb, la, gamma=18.0).backward()
        assert abs(float(la.grad) - 1.0 / 18.0) < 1e-12


class TestFullObjective:
    def make_parts(self):
        return LossBreakdown(
            gan_ab=torch.tensor(0.3),
            gan_ba=torch.tensor(0.4),
            cyc_a=torch.tensor(0.05),
            cyc_b=torch.tensor(0.07),
            ide=torch.tensor(0.02),
            cls_a=torch.tensor(0.6),
            cls_b=torch.tensor(0.5),
        )

    def test_weighted_total(self):
        # 0.3+0.4 + 10*(0.05+0.07) + 5*0.02 + (0.5 + 0.6/2) = 2.8
        w = LossWeights(alpha=5.0, beta=10.0, gamma=2.0)
        total = full_objective(self.make_parts(), w)
        assert float(total) == pytest.approx(2.8, abs=1e-6)

    def test_unweighted_variant(self):
        # same parts, cls terms enter as a plain sum: 3.1
        w = LossWeights(alpha=5.0, beta=10.0, gamma=2.0)
        total = full_objective(self.make_parts(), w, eq7_unweighted=True)
        assert float(total) == pytest.approx(3.1, abs=1e-6)

    def test_total_recorded_on_parts(self):
        parts = self.make_parts()
        total = full_objective(parts, LossWeights())
        assert parts.total is total
        d = parts.detached()
        assert d["total"] == pytest.approx(float(total))

    def test_default_weights_match_training_setup(self):
        w = LossWeights()
        assert w.alpha == 5.0 and w.beta == 10.0

    def test_nonfinite_term_named(self):
        parts = self.make_parts()
        parts.cyc_a = torch.tensor(float("nan"))
        with pytest.raises(NumericalError) as exc:
            full_objective(parts, LossWeights())
        assert "cyc_a" in str(exc.value)

    def test_weights_validation(self):
        with pytest.raises(ContractViolation):
            LossWeights(gamma=0.9)
        with pytest.raises(ContractViolation):
            LossWeights(alpha=-1.0)


class TestGradients:
    """Central finite differences against autograd on each loss term."""

    def fd_check(self, fn, x0, rel_tol=1e-4, h=1e-6):
        x = x0.clone().double().requires_grad_(True)
        fn(x).backward()
        grad = x.grad.clone()
        flat = x.detach().reshape(-1)
        for i in range(flat.numel()):
            xp = flat.clone()
            xm = flat.clone()
            xp[i] += h
            xm[i] -= h
            fp = float(fn(xp.reshape(x0.shape)))
            fm = float(fn(xm.reshape(x0.shape)))
            fd = (fp - fm) / (2 * h)
            g = float(grad.reshape(-1)[i])
            assert abs(fd - g) <= rel_tol * max(1.0, abs(fd)), (i, fd, g)

    def test_disc_loss_grad(self):
        ref = torch.tensor([0.3, 0.7, 0.55], dtype=torch.float64)
        self.fd_check(lambda p: discriminator_loss(p, ref), torch.tensor([0.6, 0.4, 0.8]))

    def test_gen_loss_grad(self):
        self.fd_check(generator_adversarial_loss, torch.tensor([0.2, 0.5, 0.9]))

    def test_cycle_loss_grad(self):
        org = torch.tensor([0.1, -0.4, 0.9], dtype=torch.float64)
        self.fd_check(lambda x: cycle_loss(x, org), torch.tensor([0.5, -0.2, 0.3]))

    def test_classifier_terms_grad(self):
        zf = torch.tensor([0.4, 0.6], dtype=torch.float64)
        self.fd_check(
            lambda z: classifier_loss_minority(z, zf), torch.tensor([0.3, 0.8])
        )
        self.fd_check(
            lambda z: classifier_loss_majority(z, zf), torch.tensor([0.3, 0.8])
        )

    def test_combined_grad_via_chain(self):
        zb = torch.tensor([0.4, 0.6], dtype=torch.float64)
        za = torch.tensor([0.2, 0.3], dtype=torch.float64)

        def fn(z):
            lb = classifier_loss_minority(z, zb)
            la = classifier_loss_majority(za, z)
            return classifier_loss_combined(lb, la, gamma=4.0)

        self.fd_check(fn, torch.tensor([0.5, 0.7]))
