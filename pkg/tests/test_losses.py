import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from avafford.decoder import MaskPrediction
from avafford.errors import ShapeMismatchError
from avafford.losses import (
    LossConfig,
    aux_loss,
    dependency_loss,
    dice_loss,
    focal_loss,
    function_loss,
    soft_iou_loss,
)
from fdcheck import check_input_gradient


def logit(p):
    return torch.log(p / (1 - p))


def make_prediction(func_prob, dep_prob, aux_func=None, aux_dep=None):
    aux_func = func_prob if aux_func is None else aux_func
    aux_dep = dep_prob if aux_dep is None else aux_dep
    dummy = torch.zeros(1, 1, 2, 2, dtype=func_prob.dtype)
    return MaskPrediction(
        func_logits=logit(func_prob),
        dep_logits=logit(dep_prob),
        func_candidates=dummy,
        dep_candidates=dummy,
        aux_func=logit(aux_func),
        aux_dep=logit(aux_dep),
    )


class TestSoftIou:
    def test_perfect_overlap(self):
        gt = torch.tensor([[1.0, 0.0], [1.0, 1.0]], dtype=torch.float64)
        assert soft_iou_loss(gt.clone(), gt).item() < 1e-5

    def test_disjoint_half_mask(self):
        gt = torch.zeros(4, 4, dtype=torch.float64)
        gt[:2] = 1.0
        assert abs(soft_iou_loss(1.0 - gt, gt).item() - 1.0) < 1e-5

    def test_uniform_half_probability_closed_form(self):
        gt = torch.zeros(4, 4, dtype=torch.float64)
        gt[0] = 1.0  # 25% foreground
        n = 16.0
        eps = 1e-6
        pred = torch.full((4, 4), 0.5, dtype=torch.float64)
        expected = 1.0 - (0.125 * n + eps) / (0.5 * n + 0.25 * n - 0.125 * n + eps)
        assert abs(soft_iou_loss(pred, gt, eps).item() - expected) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            soft_iou_loss(torch.zeros(2, 2), torch.zeros(3, 3))


class TestDice:
    def test_perfect_match(self):
        gt = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        assert dice_loss(gt.clone(), gt).item() < 1e-5

    def test_both_empty(self):
        z = torch.zeros(4, 4, dtype=torch.float64)
        assert dice_loss(z, z).item() == 0.0

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        pred = torch.tensor(rng.uniform(size=(4, 4)))
        gt = torch.tensor(rng.integers(0, 2, size=(4, 4)).astype(np.float64))
        eps = 1e-6
        inter = (pred * gt).sum()
        expected = 1.0 - (2 * inter + eps) / (pred.sum() + gt.sum() + eps)
        assert abs(dice_loss(pred, gt).item() - expected.item()) < 1e-9


class TestFocal:
    def test_confident_correct_is_near_zero(self):
        gt = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
        pred = torch.tensor([[1.0 - 1e-9, 1e-9]], dtype=torch.float64)
        assert focal_loss(pred, gt).item() < 1e-6

    def test_gamma_zero_alpha_half_is_half_bce(self):
        rng = np.random.default_rng(1)
        pred = torch.tensor(rng.uniform(0.05, 0.95, size=(5, 5)))
        gt = torch.tensor(rng.integers(0, 2, size=(5, 5)).astype(np.float64))
        eps = 1e-6
        got = focal_loss(pred, gt, alpha=0.5, gamma=0.0, eps=eps)
        bce = -(gt * torch.log(pred + eps) + (1 - gt) * torch.log(1 - pred + eps)).mean()
        assert abs(got.item() - 0.5 * bce.item()) < 1e-9

    def test_single_pixel_hand_value(self):
        pred = torch.tensor([[0.5]], dtype=torch.float64)
        gt = torch.tensor([[1.0]], dtype=torch.float64)
        expected = 0.25 * 0.25 * math.log(2.0)
        assert abs(focal_loss(pred, gt, 0.25, 2.0, eps=0.0).item() - expected) < 1e-9
        assert abs(expected - 0.04332) < 5e-5


class TestAux:
    def cfg(self, dice=1.0, focal=1.0):
        return LossConfig(dice_weight=dice, focal_weight=focal)

    def test_zero_weights(self):
        pred = torch.rand(4, 4, dtype=torch.float64)
        gt = (torch.rand(4, 4) < 0.5).double()
        assert aux_loss(pred, gt, self.cfg(0.0, 0.0)).item() == 0.0

    def test_dice_only_projection(self):
        pred = torch.rand(4, 4, dtype=torch.float64).clamp(0.01, 0.99)
        gt = (torch.rand(4, 4) < 0.5).double()
        got = aux_loss(pred, gt, self.cfg(1.0, 0.0))
        assert abs(got.item() - dice_loss(pred, gt).item()) < 1e-12

    def test_linear_combination(self):
        rng = np.random.default_rng(2)
        pred = torch.tensor(rng.uniform(0.05, 0.95, size=(4, 4)))
        gt = torch.tensor(rng.integers(0, 2, size=(4, 4)).astype(np.float64))
        cfg = self.cfg(0.7, 1.3)
        expected = 0.7 * dice_loss(pred, gt) + 1.3 * focal_loss(pred, gt)
        assert abs(aux_loss(pred, gt, cfg).item() - expected.item()) < 1e-9


class TestFunctionLoss:
    def test_lambda_zero_is_iou_only(self):
        torch.manual_seed(0)
        prob = torch.rand(1, 4, 4, dtype=torch.float64).clamp(0.01, 0.99)
        gt = (torch.rand(1, 4, 4) < 0.5).double()
        pred = make_prediction(prob, prob)
        got = function_loss(pred, gt, LossConfig(lambda_aux=0.0))
        assert abs(got.item() - soft_iou_loss(prob, gt).item()) < 1e-12

    def test_default_lambda(self):
        assert LossConfig().lambda_aux == 0.1

    def test_affine_in_lambda(self):
        torch.manual_seed(1)
        prob = torch.rand(1, 4, 4, dtype=torch.float64).clamp(0.01, 0.99)
        aux = torch.rand(1, 4, 4, dtype=torch.float64).clamp(0.01, 0.99)
        gt = (torch.rand(1, 4, 4) < 0.5).double()
        pred = make_prediction(prob, prob, aux_func=aux)
        l1 = function_loss(pred, gt, LossConfig(lambda_aux=1.0))
        l0 = function_loss(pred, gt, LossConfig(lambda_aux=0.0))
        expected = aux_loss(aux, gt, LossConfig())
        assert abs((l1 - l0).item() - expected.item()) < 1e-9

    def test_monotone_in_lambda(self):
        torch.manual_seed(2)
        prob = torch.rand(1, 4, 4, dtype=torch.float64).clamp(0.01, 0.99)
        gt = (torch.rand(1, 4, 4) < 0.5).double()
        pred = make_prediction(prob, prob)
        values = [function_loss(pred, gt, LossConfig(lambda_aux=lam)).item()
                  for lam in (0.0, 0.1, 0.5, 1.0)]
        assert values == sorted(values)


class TestDependencyLoss:
    def test_no_annotation_zero_prediction_near_zero(self):
        neg = torch.full((1, 4, 4), -40.0, dtype=torch.float64)  # sigmoid -> ~0
        dummy = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
        pred = MaskPrediction(func_logits=neg, dep_logits=neg, func_candidates=dummy,
                              dep_candidates=dummy, aux_func=neg, aux_dep=neg)
        gt = torch.zeros(1, 4, 4, dtype=torch.float64)
        loss = dependency_loss(pred, gt, gt, torch.tensor([False]), LossConfig())
        assert abs(loss.item()) < 1e-4

    def test_perfect_prediction_fg_term_near_zero(self):
        gt_dep = torch.zeros(1, 4, 4, dtype=torch.float64)
        gt_dep[0, 2:] = 1.0
        gt_func = torch.zeros(1, 4, 4, dtype=torch.float64)
        gt_func[0, :2] = 1.0
        near = gt_dep.clamp(1e-9, 1 - 1e-9)
        pred = make_prediction(gt_func.clamp(1e-9, 1 - 1e-9), near)
        cfg = LossConfig(dep_aux_weight=0.0)
        loss = dependency_loss(pred, gt_dep, gt_func, torch.tensor([True]), cfg)
        # fg ~ 0 and bg ~ 0: nothing outside the union is predicted
        assert loss.item() < 1e-4

    def test_matches_term_by_term_recomputation(self):
        rng = np.random.default_rng(3)
        prob = torch.tensor(rng.uniform(0.05, 0.95, size=(1, 4, 4)))
        aux = torch.tensor(rng.uniform(0.05, 0.95, size=(1, 4, 4)))
        gt_dep = torch.tensor(rng.integers(0, 2, size=(1, 4, 4)).astype(np.float64))
        gt_func = torch.tensor(rng.integers(0, 2, size=(1, 4, 4)).astype(np.float64))
        cfg = LossConfig(dep_iou_weight=0.9, dep_aux_weight=0.3)
        pred = make_prediction(prob, prob, aux_dep=aux)
        got = dependency_loss(pred, gt_dep, gt_func, torch.tensor([True]), cfg)

        eps = cfg.eps
        fg = dice_loss(prob[0], gt_dep[0]) + focal_loss(prob[0], gt_dep[0], 0.25, 2.0)
        bg_mask = 1.0 - torch.clamp(gt_dep[0] + gt_func[0], max=1.0)
        bg = -(torch.log(1 - prob[0] + eps) * bg_mask).sum() / bg_mask.sum()
        aux_term = aux_loss(aux[0], gt_dep[0], cfg)
        expected = 0.9 * (fg + bg) + 0.3 * aux_term
        assert abs(got.item() - expected.item()) < 1e-9

    def test_without_annotation_background_covers_whole_map(self):
        rng = np.random.default_rng(4)
        prob = torch.tensor(rng.uniform(0.05, 0.95, size=(1, 4, 4)))
        gt = torch.zeros(1, 4, 4, dtype=torch.float64)
        gt_func = torch.tensor(rng.integers(0, 2, size=(1, 4, 4)).astype(np.float64))
        cfg = LossConfig(dep_aux_weight=0.0)
        pred = make_prediction(prob, prob)
        got = dependency_loss(pred, gt, gt_func, torch.tensor([False]), cfg)
        expected = -torch.log(1 - prob + cfg.eps).mean()
        assert abs(got.item() - expected.item()) < 1e-9


class TestGradients:
    @given(seed=st.integers(0, 20))
    @settings(max_examples=5, deadline=None)
    def test_primitive_losses_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        gt = torch.tensor(rng.integers(0, 2, size=(4, 4)).astype(np.float64))
        x = torch.tensor(rng.uniform(0.1, 0.9, size=(4, 4)))
        check_input_gradient(lambda p: soft_iou_loss(p, gt), x, rtol=1e-4)
        check_input_gradient(lambda p: dice_loss(p, gt), x, rtol=1e-4)
        check_input_gradient(lambda p: focal_loss(p, gt), x, rtol=1e-4)

    def test_losses_bounded_and_finite(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pred = torch.tensor(rng.uniform(1e-6, 1 - 1e-6, size=(4, 4)))
            gt = torch.tensor(rng.integers(0, 2, size=(4, 4)).astype(np.float64))
            for fn in (soft_iou_loss, dice_loss):
                v = fn(pred, gt).item()
                assert 0.0 <= v <= 1.0
            assert focal_loss(pred, gt).item() >= 0.0

    def test_pixel_permutation_invariance(self):
        rng = np.random.default_rng(8)
        pred = torch.tensor(rng.uniform(size=(4, 4)))
        gt = torch.tensor(rng.integers(0, 2, size=(4, 4)).astype(np.float64))
        perm = rng.permutation(16)
        pred_p = pred.flatten()[perm].reshape(4, 4)
        gt_p = gt.flatten()[perm].reshape(4, 4)
        assert abs(soft_iou_loss(pred, gt).item() - soft_iou_loss(pred_p, gt_p).item()) < 1e-12
        assert abs(dice_loss(pred, gt).item() - dice_loss(pred_p, gt_p).item()) < 1e-12
