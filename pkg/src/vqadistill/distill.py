"""Three-term distillation loss, teacher freeze policy, and the joint step.

The training objective is a plain sum of three parts: an L2 term supervising
the teacher's score, an L2 term supervising the student's score, and a smooth
L1 term pulling the student's (projected) pooled feature toward the teacher's.
Loss weights default to (1, 1, 1); a weight of exactly zero removes that term
from the autograd graph entirely, so weights (0, 1, 0) reproduce plain
supervised student training bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch
from torch import nn
from torch.nn.init import trunc_normal_

from .errors import ConfigError, DivergenceError
from .models import GROUP_HEAD, _Encoder, block_group

ADAM_BETAS = (0.9, 0.999)
WEIGHT_DECAY = 0.01


@dataclass(frozen=True)
class LossBreakdown:
    """The three loss terms and their weighted sum, as plain floats.

    ``total`` accumulates left to right: w1*teacher_l2 + w2*student_l2 +
    w3*feature_smooth_l1, in the tensor dtype used for training.
    """

    teacher_l2: float
    student_l2: float
    feature_smooth_l1: float
    total: float

    def as_dict(self) -> dict:
        return {"teacher_l2": self.teacher_l2, "student_l2": self.student_l2,
                "feature_smooth_l1": self.feature_smooth_l1, "total": self.total}


@dataclass(frozen=True)
class FreezePolicy:
    """Names of parameter groups that receive gradient updates."""

    trainable_groups: frozenset

    @classmethod
    def homologous_teacher(cls, depth: int) -> "FreezePolicy":
        """Train only the last transformer block and the head."""
        return cls(frozenset({block_group(depth - 1), GROUP_HEAD}))

    @classmethod
    def all_of(cls, model: _Encoder) -> "FreezePolicy":
        return cls(frozenset(model.parameter_groups().keys()))


@dataclass(frozen=True)
class DistillationConfig:
    """Optimization settings for one training run.

    ``steps`` and ``learning_rate`` accept zero so that no-op runs (checkpoint
    equals initialization, parameters unchanged) are expressible.
    """

    batch_size: int = 8
    learning_rate: float = 1e-3
    steps: int = 700
    seed: int = 0
    loss_weights: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if len(self.loss_weights) != 3:
            raise ConfigError("loss_weights must have exactly three entries")


def _as_float_tensor(values) -> torch.Tensor:
    t = torch.as_tensor(values)
    if not torch.is_floating_point(t):
        t = t.to(torch.get_default_dtype())
    return torch.atleast_1d(t)


def mse_loss(predictions, targets) -> torch.Tensor:
    """Mean squared difference of two equal-length score vectors."""
    p = _as_float_tensor(predictions)
    t = _as_float_tensor(targets)
    if p.numel() == 0:
        raise ValueError("mse_loss: empty inputs")
    if p.shape != t.shape:
        raise ValueError(f"mse_loss: length mismatch {tuple(p.shape)} vs {tuple(t.shape)}")
    return ((p - t) ** 2).mean()


def smooth_l1(a, b) -> torch.Tensor:
    """Mean smooth-L1: 0.5*d^2 for |d| < 1, |d| - 0.5 otherwise (beta = 1)."""
    ta = _as_float_tensor(a)
    tb = _as_float_tensor(b)
    if ta.shape != tb.shape:
        raise ValueError(f"smooth_l1: shape mismatch {tuple(ta.shape)} vs {tuple(tb.shape)}")
    d = ta - tb
    ad = d.abs()
    return torch.where(ad < 1, 0.5 * d * d, ad - 0.5).mean()


def total_loss(teacher_pred, student_pred, targets, teacher_feat,
               student_feat_projected,
               weights: Sequence[float] = (1.0, 1.0, 1.0)):
    """Weighted sum of the three terms.

    Returns ``(total, breakdown)`` where ``total`` is the differentiable
    scalar. Terms with weight exactly 0 are kept out of the graph (their
    values still appear in the breakdown); weight exactly 1 adds the term
    unscaled.
    """
    if len(weights) != 3:
        raise ValueError("weights must have exactly three entries")
    t_feat = torch.as_tensor(teacher_feat)
    s_feat = torch.as_tensor(student_feat_projected)
    if t_feat.shape[-1] != s_feat.shape[-1]:
        raise ValueError(
            f"feature dim mismatch: teacher {t_feat.shape[-1]} vs "
            f"projected student {s_feat.shape[-1]}")

    teacher_l2 = mse_loss(teacher_pred, targets)
    student_l2 = mse_loss(student_pred, targets)
    feature_term = smooth_l1(s_feat, t_feat)

    total = None
    for w, term in zip(weights, (teacher_l2, student_l2, feature_term)):
        if w == 0:
            continue
        piece = term if w == 1.0 else w * term
        total = piece if total is None else total + piece
    if total is None:
        total = torch.zeros((), dtype=teacher_l2.dtype)

    breakdown = LossBreakdown(
        teacher_l2=teacher_l2.item(),
        student_l2=student_l2.item(),
        feature_smooth_l1=feature_term.item(),
        total=total.item(),
    )
    return total, breakdown


def apply_freeze_policy(model: _Encoder, policy: FreezePolicy) -> _Encoder:
    """Mark only the policy's groups trainable; everything else is frozen."""
    groups = model.parameter_groups()
    unknown = set(policy.trainable_groups) - set(groups)
    if unknown:
        raise ConfigError(
            f"unknown parameter groups {sorted(unknown)}; "
            f"model has {sorted(groups)}")
    for name, params in groups.items():
        trainable = name in policy.trainable_groups
        for p in params:
            p.requires_grad_(trainable)
    return model


def trainable_parameters(*modules: nn.Module):
    params = []
    for m in modules:
        params.extend(p for p in m.parameters() if p.requires_grad)
    return params


def build_projection(student_dim: int, teacher_dim: int, seed: int,
                     dtype: torch.dtype = torch.float32) -> nn.Linear:
    """Affine map from student to teacher feature width.

    Always applied, even when the dims already match, so homologous and
    heterogeneous paths share one code path.
    """
    proj = nn.Linear(student_dim, teacher_dim)
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        trunc_normal_(proj.weight, std=0.02, generator=generator)
        proj.bias.zero_()
    if dtype != torch.float32:
        proj = proj.to(dtype)
    return proj


def align_features(student_feat: torch.Tensor, proj: nn.Linear) -> torch.Tensor:
    if student_feat.shape[-1] != proj.in_features:
        raise ValueError(
            f"feature dim {student_feat.shape[-1]} does not match projection "
            f"input dim {proj.in_features}")
    return proj(student_feat)


def build_optimizer(params: Iterable[nn.Parameter], learning_rate: float):
    return torch.optim.AdamW(list(params), lr=learning_rate,
                             betas=ADAM_BETAS, weight_decay=WEIGHT_DECAY)


def batch_tensors(batch, dtype: torch.dtype):
    """Stack a list of LabeledClips into (clips, targets) tensors."""
    if not batch:
        raise ValueError("empty batch")
    clips = torch.stack([item.clip for item in batch]).to(dtype)
    targets = torch.tensor([item.mos for item in batch], dtype=dtype)
    return clips, targets


def distill_step(batch, teacher: _Encoder, student: _Encoder, proj: nn.Linear,
                 optimizer, config: DistillationConfig,
                 step_index: int = 0) -> LossBreakdown:
    """One forward through both models, one masked gradient step.

    Mutates model parameters and optimizer state in place; returns the
    pre-step loss breakdown. Raises DivergenceError on a non-finite loss.
    """
    dtype = next(student.parameters()).dtype
    clips, targets = batch_tensors(batch, dtype)
    teacher_feat, teacher_pred = teacher(clips)
    student_feat, student_pred = student(clips)
    projected = align_features(student_feat, proj)
    total, breakdown = total_loss(teacher_pred, student_pred, targets,
                                  teacher_feat, projected, config.loss_weights)
    if not math.isfinite(breakdown.total):
        raise DivergenceError(step_index, breakdown)
    optimizer.zero_grad(set_to_none=True)
    if total.requires_grad:
        total.backward()
    optimizer.step()
    return breakdown
