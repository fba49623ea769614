"""Central finite-difference verification of the distillation loss gradients.

Autograd provides the analytic gradients used in training; this module
recomputes every trainable parameter's gradient by central differences in
double precision and compares. The two routes share no gradient code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch

from .distill import align_features, batch_tensors, total_loss
from .models import _Encoder

DEFAULT_EPS = 1e-4
DEFAULT_TOLERANCE = 1e-4
# Central differences carry O(eps^2) truncation error, so near-zero gradients
# cannot meet a pure relative test; errors below this scale are measured
# against the floor instead.
NOISE_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    passed: bool
    tolerance: float
    eps: float
    max_rel_error: float
    by_group: Dict[str, Optional[float]] = field(default_factory=dict)
    frozen_groups: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "tolerance": self.tolerance,
                "eps": self.eps, "max_rel_error": self.max_rel_error,
                "by_group": self.by_group, "frozen_groups": self.frozen_groups}


def _rel_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    denom = torch.clamp(torch.maximum(analytic.abs(), numeric.abs()),
                        min=NOISE_FLOOR)
    return float(((analytic - numeric).abs() / denom).max())


def _named_groups(teacher: _Encoder, student: _Encoder, proj) -> Dict[str, List[torch.nn.Parameter]]:
    groups: Dict[str, List[torch.nn.Parameter]] = {}
    for prefix, model in (("teacher", teacher), ("student", student)):
        for name, params in model.parameter_groups().items():
            groups[f"{prefix}/{name}"] = params
    groups["projection"] = list(proj.parameters())
    return groups


def check_gradients(teacher: _Encoder, student: _Encoder, proj, batch,
                    weights: Sequence[float] = (1.0, 1.0, 1.0),
                    eps: float = DEFAULT_EPS,
                    tolerance: float = DEFAULT_TOLERANCE,
                    corrupt_group: Optional[str] = None) -> GradCheckReport:
    """Compare autograd to central differences on the full three-term loss.

    Models should be float64; every parameter with requires_grad participates.
    ``corrupt_group`` deliberately offsets that group's analytic gradients so
    tests can confirm the checker notices.
    """
    dtype = next(student.parameters()).dtype
    clips, targets = batch_tensors(batch, dtype)

    def loss_value() -> torch.Tensor:
        t_feat, t_pred = teacher(clips)
        s_feat, s_pred = student(clips)
        total, _ = total_loss(t_pred, s_pred, targets, t_feat,
                              align_features(s_feat, proj), weights)
        return total

    groups = _named_groups(teacher, student, proj)
    for params in groups.values():
        for p in params:
            p.grad = None
    total = loss_value()
    total.backward()

    by_group: Dict[str, Optional[float]] = {}
    frozen: List[str] = []
    max_err = 0.0
    with torch.no_grad():
        for name, params in groups.items():
            trainable = [p for p in params if p.requires_grad]
            if not trainable:
                by_group[name] = None
                frozen.append(name)
                continue
            group_err = 0.0
            for p in trainable:
                analytic = (p.grad if p.grad is not None
                            else torch.zeros_like(p)).reshape(-1).clone()
                if corrupt_group == name:
                    analytic = analytic + 1e-2
                flat = p.reshape(-1)
                numeric = torch.empty_like(analytic)
                for i in range(flat.numel()):
                    original = flat[i].item()
                    flat[i] = original + eps
                    plus = float(loss_value())
                    flat[i] = original - eps
                    minus = float(loss_value())
                    flat[i] = original
                    numeric[i] = (plus - minus) / (2.0 * eps)
                group_err = max(group_err, _rel_error(analytic, numeric))
            by_group[name] = group_err
            max_err = max(max_err, group_err)
    return GradCheckReport(passed=max_err <= tolerance, tolerance=tolerance,
                           eps=eps, max_rel_error=max_err,
                           by_group=by_group, frozen_groups=frozen)
