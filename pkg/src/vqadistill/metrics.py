"""Correlation metrics and comparison reports.

PLCC is the Pearson product-moment correlation of raw scores; SRCC is the
Pearson correlation of average ranks (ties get the mean of their rank range).
A constant input vector makes either metric undefined and raises, never
silently returning 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from .errors import ConfigError, UndefinedCorrelationError
from .models import _Encoder, count_parameters

RECORD_FIELDS = ("model", "params", "plcc", "srcc", "delta_plcc",
                 "delta_srcc", "dataset", "seed")


def _validate_pair(predicted, actual):
    x = np.asarray(predicted, dtype=np.float64)
    y = np.asarray(actual, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("score vectors must be one-dimensional")
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise ValueError(f"need at least 3 score pairs, got {len(x)}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("scores must be finite")
    if np.all(x == x[0]):
        raise UndefinedCorrelationError("predicted scores are constant")
    if np.all(y == y[0]):
        raise UndefinedCorrelationError("actual scores are constant")
    return x, y


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xd = x - x.mean()
    yd = y - y.mean()
    return float(np.dot(xd, yd) / math.sqrt(np.dot(xd, xd) * np.dot(yd, yd)))


def _fit_logistic(predicted: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """Map predictions through a fitted 4-parameter logistic."""
    from scipy.optimize import curve_fit

    def logistic(x, top, bottom, slope, center):
        return bottom + (top - bottom) / (1.0 + np.exp(-slope * (x - center)))

    p0 = [float(actual.max()), float(actual.min()), 1.0, float(np.median(predicted))]
    try:
        popt, _ = curve_fit(logistic, predicted, actual, p0=p0, maxfev=20000)
        return logistic(predicted, *popt)
    except (RuntimeError, ValueError):
        return predicted


def plcc(predicted: Sequence[float], actual: Sequence[float],
         logistic_fit: bool = False) -> float:
    """Pearson linear correlation; optional 4-parameter logistic pre-fit."""
    x, y = _validate_pair(predicted, actual)
    if logistic_fit:
        x = _fit_logistic(x, y)
        if np.all(x == x[0]):
            raise UndefinedCorrelationError("logistic fit collapsed predictions")
    return _pearson(x, y)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def srcc(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson on average ranks."""
    x, y = _validate_pair(predicted, actual)
    return _pearson(average_ranks(x), average_ranks(y))


@dataclass(frozen=True)
class CorrelationReport:
    """PLCC/SRCC for one model on one split, with optional baseline deltas."""

    model_name: str
    params: int
    plcc: Optional[float]
    srcc: Optional[float]
    plcc_error: Optional[str] = None
    srcc_error: Optional[str] = None
    dataset: str = "synthetic"
    seed: Optional[int] = None
    baseline_name: Optional[str] = None
    delta_plcc: Optional[float] = None
    delta_srcc: Optional[float] = None

    def with_baseline(self, baseline: "CorrelationReport") -> "CorrelationReport":
        """Deltas are distilled minus baseline, per metric where both exist."""
        d_plcc = (self.plcc - baseline.plcc
                  if self.plcc is not None and baseline.plcc is not None else None)
        d_srcc = (self.srcc - baseline.srcc
                  if self.srcc is not None and baseline.srcc is not None else None)
        return replace(self, baseline_name=baseline.model_name,
                       delta_plcc=d_plcc, delta_srcc=d_srcc)

    def to_record(self) -> Dict:
        return {"model": self.model_name, "params": self.params,
                "plcc": self.plcc, "srcc": self.srcc,
                "delta_plcc": self.delta_plcc, "delta_srcc": self.delta_srcc,
                "dataset": self.dataset, "seed": self.seed}

    @classmethod
    def from_record(cls, record: Dict) -> "CorrelationReport":
        return cls(model_name=record["model"], params=record["params"],
                   plcc=record["plcc"], srcc=record["srcc"],
                   delta_plcc=record.get("delta_plcc"),
                   delta_srcc=record.get("delta_srcc"),
                   dataset=record.get("dataset", "synthetic"),
                   seed=record.get("seed"))


def predict_scores(model: _Encoder, clips, batch_size: int = 32) -> List[float]:
    """Forward every clip in index order, eval mode, no parameter mutation."""
    model.eval()
    dtype = next(model.parameters()).dtype
    scores: List[float] = []
    with torch.no_grad():
        for start in range(0, len(clips), batch_size):
            batch = clips[start:start + batch_size]
            stacked = torch.stack([item.clip for item in batch]).to(dtype)
            _, pred = model(stacked)
            scores.extend(float(s) for s in pred)
    return scores


def evaluate_model(model: _Encoder, split, model_name: str = "model",
                   dataset: str = "synthetic", seed: Optional[int] = None,
                   batch_size: int = 32) -> CorrelationReport:
    """Score every clip against its MOS; undefined correlations are carried
    in the report rather than raised."""
    if not split:
        raise ValueError("empty evaluation split")
    predicted = predict_scores(model, split, batch_size=batch_size)
    actual = [item.mos for item in split]
    values: Dict[str, Optional[float]] = {}
    errors: Dict[str, Optional[str]] = {}
    for name, fn in (("plcc", plcc), ("srcc", srcc)):
        try:
            values[name] = fn(predicted, actual)
            errors[name] = None
        except UndefinedCorrelationError as exc:
            values[name] = None
            errors[name] = str(exc)
    return CorrelationReport(
        model_name=model_name, params=count_parameters(model).total,
        plcc=values["plcc"], srcc=values["srcc"],
        plcc_error=errors["plcc"], srcc_error=errors["srcc"],
        dataset=dataset, seed=seed)


@dataclass
class ComparisonTable:
    text: str
    records: List[Dict] = field(default_factory=list)


def _fmt_value(value: Optional[float], best: bool) -> str:
    if value is None:
        return "n/a"
    return f"{value:.3f}" + ("*" if best else "")


def _fmt_delta(delta: Optional[float], best: bool) -> str:
    if delta is None:
        return ""
    arrow = "↑" if delta >= 0 else "↓"
    return f"({arrow}{abs(delta):.3f})" + ("+" if best else "")


def comparison_table(reports: Sequence[CorrelationReport],
                     baselines: Optional[Dict[str, str]] = None) -> ComparisonTable:
    """Render reports as an aligned text table plus structured records.

    ``baselines`` maps a model name to the name of its no-distillation
    baseline among ``reports``; mapped rows get (distilled - baseline) deltas.
    The best value per metric column is flagged ``*`` and the largest
    positive delta ``+``.
    """
    if not reports:
        raise ValueError("no reports to compare")
    by_name = {r.model_name: r for r in reports}
    rows: List[CorrelationReport] = []
    for r in reports:
        if baselines and r.model_name in baselines:
            base_name = baselines[r.model_name]
            if base_name not in by_name:
                raise ConfigError(
                    f"baseline {base_name!r} for {r.model_name!r} not among reports")
            r = r.with_baseline(by_name[base_name])
        rows.append(r)

    def best_value(attr):
        vals = [getattr(r, attr) for r in rows if getattr(r, attr) is not None]
        return max(vals) if vals else None

    def best_gain(attr):
        vals = [getattr(r, attr) for r in rows
                if getattr(r, attr) is not None and getattr(r, attr) > 0]
        return max(vals) if vals else None

    best = {attr: best_value(attr) for attr in ("plcc", "srcc")}
    gain = {attr: best_gain(attr) for attr in ("delta_plcc", "delta_srcc")}

    cells = []
    for r in rows:
        plcc_txt = _fmt_value(r.plcc, r.plcc is not None and r.plcc == best["plcc"])
        srcc_txt = _fmt_value(r.srcc, r.srcc is not None and r.srcc == best["srcc"])
        dp = _fmt_delta(r.delta_plcc, r.delta_plcc is not None
                        and r.delta_plcc == gain["delta_plcc"])
        ds = _fmt_delta(r.delta_srcc, r.delta_srcc is not None
                        and r.delta_srcc == gain["delta_srcc"])
        cells.append((r.model_name, f"{r.params / 1e6:.2f}M",
                      f"{plcc_txt} {dp}".strip(), f"{srcc_txt} {ds}".strip()))

    headers = ("Method", "Params", "PLCC", "SRCC")
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for c in cells:
        lines.append("  ".join(c[i].ljust(widths[i]) for i in range(4)))
    lines.append("* best per column; + largest gain per column")
    return ComparisonTable(text="\n".join(lines),
                           records=[r.to_record() for r in rows])
