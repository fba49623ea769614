import json
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from torch import nn

from vqadistill.errors import ConfigError, UndefinedCorrelationError
from vqadistill.metrics import (ComparisonTable, CorrelationReport,
                                average_ranks, comparison_table,
                                evaluate_model, plcc, srcc)


# ---------------------------------------------------------------------------
# Independent brute-force oracles: direct formulas, naive pairwise ranking.


def naive_pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def naive_ranks(x):
    # O(n^2) pairwise comparisons, vectorized for speed only.
    v = np.asarray(x, dtype=np.float64)
    less = (v[None, :] < v[:, None]).sum(axis=1)
    equal = (v[None, :] == v[:, None]).sum(axis=1)
    return less + (equal + 1) / 2.0


def naive_spearman(x, y):
    rx = naive_ranks(x)
    ry = naive_ranks(y)
    n = len(rx)
    mx, my = rx.mean(), ry.mean()
    cov = float(((rx - mx) * (ry - my)).sum())
    vx = float(((rx - mx) ** 2).sum())
    vy = float(((ry - my) ** 2).sum())
    return cov / math.sqrt(vx * vy)


def spearman_closed_form(x, y):
    # Tie-free only: 1 - 6*sum(d^2) / (n*(n^2-1)).
    rx = naive_ranks(x)
    ry = naive_ranks(y)
    n = len(rx)
    d2 = float(((rx - ry) ** 2).sum())
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


# ---------------------------------------------------------------------------
# Hand-derived examples


def test_plcc_exact_linear():
    assert plcc([1, 2, 3], [2, 4, 6]) == 1.0


def test_plcc_exact_anti_linear():
    assert plcc([1, 2, 3], [6, 4, 2]) == -1.0


def test_plcc_hand_derived_point_eight():
    # covariance sum 4.0, each centered sum of squares 5.0 -> 4/5
    assert plcc([1, 2, 3, 4], [1, 3, 2, 4]) == 0.8


def test_srcc_monotone_is_one():
    assert srcc([1, 5, 9, 20], [0.1, 0.2, 0.3, 4.0]) == 1.0
    assert srcc([1, 2, 3], [10, 100, 1000]) == 1.0


def test_srcc_hand_derived_point_eight():
    # ranks equal values here, so SRCC matches the PLCC hand case
    assert srcc([1, 2, 3, 4], [1, 3, 2, 4]) == 0.8
    assert spearman_closed_form([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)


def test_srcc_with_ties_average_ranks():
    # ranks become [1.5, 1.5, 3] on both sides -> identical -> 1.0
    assert list(average_ranks([1, 1, 2])) == [1.5, 1.5, 3.0]
    assert srcc([1, 1, 2], [1, 1, 2]) == 1.0


def test_average_ranks_mixed_ties():
    assert list(average_ranks([3, 1, 3, 2])) == [3.5, 1.0, 3.5, 2.0]


# ---------------------------------------------------------------------------
# Error contract


@pytest.mark.parametrize("bad_x, bad_y", [
    ([1, 1, 1], [1, 2, 3]),
    ([1, 2, 3], [5, 5, 5]),
])
def test_constant_vector_raises(bad_x, bad_y):
    with pytest.raises(UndefinedCorrelationError):
        plcc(bad_x, bad_y)
    with pytest.raises(UndefinedCorrelationError):
        srcc(bad_x, bad_y)


def test_short_and_mismatched_inputs_raise():
    with pytest.raises(ValueError):
        plcc([1, 2], [1, 2])
    with pytest.raises(ValueError):
        plcc([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        srcc([1, 2, float("nan")], [1, 2, 3])


# ---------------------------------------------------------------------------
# Oracle equivalence


def test_brute_force_agreement_random_vectors():
    rng = np.random.default_rng(7)
    for trial in range(100):
        n = int(rng.integers(5, 1001))
        if trial % 3 == 0:
            # heavy ties: small integer support
            x = rng.integers(0, 5, size=n).astype(np.float64)
            y = rng.integers(0, 5, size=n).astype(np.float64)
            if np.all(x == x[0]) or np.all(y == y[0]):
                x[0] += 1.0
                y[0] += 1.0
        else:
            x = rng.normal(size=n)
            y = rng.normal(size=n)
        assert plcc(x, y) == pytest.approx(naive_pearson(list(x), list(y)), abs=1e-12)
        assert srcc(x, y) == pytest.approx(naive_spearman(x, y), abs=1e-12)


def test_closed_form_matches_rank_pearson_when_tie_free():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(4, 200))
        x = rng.permutation(n).astype(np.float64)
        y = rng.permutation(n).astype(np.float64)
        assert srcc(x, y) == pytest.approx(spearman_closed_form(x, y), abs=1e-12)


# ---------------------------------------------------------------------------
# Invariance properties


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.01, 100), b=st.floats(-50, 50),
       seed=st.integers(0, 2 ** 16))
def test_affine_invariance(a, b, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=30)
    y = rng.normal(size=30)
    assert plcc(a * x + b, y) == pytest.approx(plcc(x, y), abs=1e-12)
    assert plcc(x, a * y + b) == pytest.approx(plcc(x, y), abs=1e-12)
    assert srcc(a * x + b, y) == srcc(x, y)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 16))
def test_srcc_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=25)
    y = rng.normal(size=25)
    base = srcc(x, y)
    assert srcc(np.exp(x), y) == base
    assert srcc(x, y ** 3) == base


# ---------------------------------------------------------------------------
# evaluate_model


class ScriptedModel(nn.Module):
    """Returns precomputed scores in consumption order; for wiring tests."""

    def __init__(self, scores, embed_dim=4):
        super().__init__()
        self.scores = list(scores)
        self.cursor = 0
        self.dummy = nn.Parameter(torch.zeros(1, dtype=torch.float64))
        self.embed_dim = embed_dim

    def forward(self, clips):
        k = clips.shape[0]
        out = torch.tensor(self.scores[self.cursor:self.cursor + k],
                           dtype=torch.float64)
        self.cursor += k
        return torch.zeros(k, self.embed_dim), out

    def parameter_groups(self):
        return {"head": [self.dummy]}


def test_evaluate_model_oracle_scores(tiny_split):
    split = tiny_split.test
    mos = [c.mos for c in split]
    report = evaluate_model(ScriptedModel(mos), split, "oracle")
    assert report.plcc == 1.0
    assert report.srcc == 1.0
    report = evaluate_model(ScriptedModel([-m for m in mos]), split, "anti")
    assert report.plcc == -1.0
    assert report.srcc == -1.0


def test_evaluate_model_constant_predictions_carried_not_raised(tiny_split):
    split = tiny_split.test
    report = evaluate_model(ScriptedModel([0.5] * len(split)), split, "flat")
    assert report.plcc is None and report.srcc is None
    assert "constant" in report.plcc_error
    assert "constant" in report.srcc_error


def test_evaluate_model_includes_param_count(tiny_split):
    report = evaluate_model(ScriptedModel([c.mos for c in tiny_split.test]),
                            tiny_split.test, "oracle")
    assert report.params == 1


def test_untrained_model_srcc_below_half():
    # Permutation-null Monte Carlo: for n = 100, |srcc| of unrelated vectors
    # concentrates near 0; 0.5 sits far in the tail.
    rng = np.random.default_rng(11)
    preds = rng.normal(size=100)
    mos = rng.uniform(size=100)
    null = []
    for _ in range(1000):
        null.append(abs(srcc(preds, rng.permutation(mos))))
    assert np.quantile(null, 0.999) < 0.5
    assert abs(srcc(preds, mos)) < 0.5


def test_untrained_encoder_srcc_below_half():
    from vqadistill.data import DataConfig, build_dataset_from_config
    from vqadistill.models import ModelConfig, build_encoder

    # 100+ clips: 10 contents x 3 families x 4 strengths = 120
    cfg = DataConfig(num_contents=10, strengths_per_family=4,
                     source_frames=4, source_height=16, source_width=16,
                     crop_frames=2, crop_height=8, crop_width=8, block_size=4)
    data = build_dataset_from_config(cfg, seed=5)
    clips = data.train + data.test
    assert len(clips) == 120
    model = build_encoder(ModelConfig(family="vit", embed_dim=8, depth=2,
                                      num_heads=2, frames=2, height=8, width=8,
                                      tubelet_t=1, tubelet_h=4, tubelet_w=4),
                          seed=123)
    report = evaluate_model(model, clips, "untrained")
    assert abs(report.srcc) < 0.5


# ---------------------------------------------------------------------------
# Comparison table


def _report(name, p, s, params=1_000_000):
    return CorrelationReport(model_name=name, params=params, plcc=p, srcc=s)


def test_table_single_report_no_deltas():
    table = comparison_table([_report("solo", 0.5, 0.6)])
    assert isinstance(table, ComparisonTable)
    assert "solo" in table.text
    assert "(" not in table.text.splitlines()[2]
    assert table.records[0]["delta_plcc"] is None


def test_table_positive_delta_formatting():
    reports = [_report("base", 0.688, 0.63),
               _report("distilled", 0.759, 0.734)]
    table = comparison_table(reports, baselines={"distilled": "base"})
    assert "(↑0.071)" in table.text
    assert "(↑0.104)" in table.text
    rec = {r["model"]: r for r in table.records}
    assert rec["distilled"]["delta_plcc"] == pytest.approx(0.071)
    assert rec["base"]["delta_plcc"] is None


def test_table_negative_delta_formatting():
    reports = [_report("base", 0.7, 0.7), _report("worse", 0.6, 0.65)]
    table = comparison_table(reports, baselines={"worse": "base"})
    assert "(↓0.100)" in table.text
    assert "(↓0.050)" in table.text


def test_table_flags_best_and_best_gain():
    reports = [_report("base", 0.5, 0.5), _report("a", 0.7, 0.6),
               _report("b", 0.65, 0.8)]
    table = comparison_table(reports, baselines={"a": "base", "b": "base"})
    lines = table.text.splitlines()
    row_a = next(l for l in lines if l.startswith("a "))
    row_b = next(l for l in lines if l.startswith("b "))
    assert "0.700*" in row_a          # best plcc
    assert "0.800*" in row_b          # best srcc
    assert "(↑0.200)+" in row_a  # largest plcc gain
    assert "(↑0.300)+" in row_b  # largest srcc gain


def test_table_unresolved_baseline_raises():
    with pytest.raises(ConfigError):
        comparison_table([_report("a", 0.5, 0.5)], baselines={"a": "ghost"})


def test_records_round_trip():
    reports = [_report("base", 0.688, 0.63),
               _report("distilled", 0.759, 0.734)]
    table = comparison_table(reports, baselines={"distilled": "base"})
    blob = json.dumps(table.records)
    parsed = [CorrelationReport.from_record(r) for r in json.loads(blob)]
    again = [r.to_record() for r in parsed]
    assert again == table.records
