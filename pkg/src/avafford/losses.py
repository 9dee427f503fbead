"""Training objectives: soft IoU, Dice, and Focal primitives, the auxiliary
mask loss, and the composed function / dependency losses."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .decoder import MaskPrediction
from .errors import ShapeMismatchError


@dataclass
class LossConfig:
    lambda_aux: float = 0.1
    dice_weight: float = 1.0
    focal_weight: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    dep_iou_weight: float = 1.0
    dep_aux_weight: float = 0.1
    eps: float = 1e-6

    def validate(self) -> None:
        weights = (self.lambda_aux, self.dice_weight, self.focal_weight,
                   self.dep_iou_weight, self.dep_aux_weight)
        if any(w < 0 or not torch.isfinite(torch.tensor(w)) for w in weights):
            raise ValueError("loss weights must be finite and >= 0")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")


def _check_shapes(pred: torch.Tensor, gt: torch.Tensor) -> None:
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"prediction {tuple(pred.shape)} vs target {tuple(gt.shape)}")


def soft_iou_loss(pred_prob: torch.Tensor, gt: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """1 - (sum p*g + eps) / (sum p + sum g - sum p*g + eps), per sample then mean."""
    _check_shapes(pred_prob, gt)
    dims = tuple(range(1, pred_prob.ndim)) if pred_prob.ndim > 2 else None
    if dims is None:
        pred_prob, gt = pred_prob.unsqueeze(0), gt.unsqueeze(0)
        dims = (1, 2)
    inter = (pred_prob * gt).sum(dim=dims)
    union = pred_prob.sum(dim=dims) + gt.sum(dim=dims) - inter
    return (1.0 - (inter + eps) / (union + eps)).mean()


def dice_loss(pred_prob: torch.Tensor, gt: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """1 - (2 sum p*g + eps) / (sum p + sum g + eps), per sample then mean."""
    _check_shapes(pred_prob, gt)
    dims = tuple(range(1, pred_prob.ndim)) if pred_prob.ndim > 2 else None
    if dims is None:
        pred_prob, gt = pred_prob.unsqueeze(0), gt.unsqueeze(0)
        dims = (1, 2)
    inter = (pred_prob * gt).sum(dim=dims)
    total = pred_prob.sum(dim=dims) + gt.sum(dim=dims)
    return (1.0 - (2.0 * inter + eps) / (total + eps)).mean()


def focal_loss(pred_prob: torch.Tensor, gt: torch.Tensor, alpha: float = 0.25,
               gamma: float = 2.0, eps: float = 1e-6) -> torch.Tensor:
    """Mean over pixels of the alpha-balanced focal term."""
    _check_shapes(pred_prob, gt)
    g = gt.to(pred_prob.dtype)
    pos = -alpha * g * (1.0 - pred_prob) ** gamma * torch.log(pred_prob + eps)
    neg = -(1.0 - alpha) * (1.0 - g) * pred_prob ** gamma * torch.log(1.0 - pred_prob + eps)
    return (pos + neg).mean()


def aux_loss(aux_pred_prob: torch.Tensor, gt: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Weighted Dice + Focal on the upsampled averaged-candidate mask."""
    return (cfg.dice_weight * dice_loss(aux_pred_prob, gt, cfg.eps)
            + cfg.focal_weight * focal_loss(aux_pred_prob, gt, cfg.focal_alpha, cfg.focal_gamma, cfg.eps))


def function_loss(pred: MaskPrediction, gt_func: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Soft IoU on the final map plus lambda-weighted auxiliary supervision."""
    final = soft_iou_loss(torch.sigmoid(pred.func_logits), gt_func, cfg.eps)
    if cfg.lambda_aux == 0:
        return final
    return final + cfg.lambda_aux * aux_loss(torch.sigmoid(pred.aux_func), gt_func, cfg)


def _background_bce(pred_prob: torch.Tensor, bg_mask: torch.Tensor, eps: float) -> torch.Tensor:
    """Mean -log(1 - p) over background pixels; zero when none exist."""
    n_bg = bg_mask.sum()
    if n_bg == 0:
        return pred_prob.sum() * 0.0
    return -(torch.log(1.0 - pred_prob + eps) * bg_mask).sum() / n_bg


def dependency_loss(pred: MaskPrediction, gt_dep: torch.Tensor, gt_func: torch.Tensor,
                    has_dep: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Foreground focal-dice on annotated samples, background cross-entropy
    outside the union of both regions (the whole map when the sample has no
    dependency annotation), plus auxiliary supervision; weighted sum."""
    prob = torch.sigmoid(pred.dep_logits)
    aux_prob = torch.sigmoid(pred.aux_dep)
    if prob.ndim == 2:
        prob, aux_prob = prob.unsqueeze(0), aux_prob.unsqueeze(0)
        gt_dep, gt_func = gt_dep.unsqueeze(0), gt_func.unsqueeze(0)
    has_dep = torch.as_tensor(has_dep, dtype=torch.bool).reshape(-1)
    total = prob.sum() * 0.0
    for i in range(prob.shape[0]):
        p, g_d, g_f = prob[i], gt_dep[i].to(prob.dtype), gt_func[i].to(prob.dtype)
        if has_dep[i]:
            fg = (dice_loss(p, g_d, cfg.eps)
                  + focal_loss(p, g_d, cfg.focal_alpha, cfg.focal_gamma, cfg.eps))
            bg_mask = 1.0 - torch.clamp(g_d + g_f, max=1.0)
        else:
            fg = p.sum() * 0.0
            bg_mask = torch.ones_like(p)
        bg = _background_bce(p, bg_mask, cfg.eps)
        aux = aux_loss(aux_prob[i], g_d, cfg)
        total = total + cfg.dep_iou_weight * (fg + bg) + cfg.dep_aux_weight * aux
    return total / prob.shape[0]
