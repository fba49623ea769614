import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from vqadistill.errors import ConfigError, ShapeError
from vqadistill.models import (ModelConfig, ParameterStats, build_encoder,
                               count_parameters, expected_parameter_stats)

GEOM = dict(frames=2, height=4, width=4, tubelet_t=1, tubelet_h=2, tubelet_w=2)


# ---------------------------------------------------------------------------
# Config validation


@pytest.mark.parametrize("kwargs, fragment", [
    (dict(family="rnn", embed_dim=8, depth=1, num_heads=1, **GEOM), "family"),
    (dict(family="vit", embed_dim=0, depth=1, num_heads=1, **GEOM), "embed_dim"),
    (dict(family="vit", embed_dim=8, depth=-2, num_heads=1, **GEOM), "depth"),
    (dict(family="vit", embed_dim=8, depth=1, num_heads=3, **GEOM), "num_heads"),
    (dict(family="vit", embed_dim=8, depth=1, num_heads=1, frames=3,
          height=4, width=4, tubelet_t=2, tubelet_h=2, tubelet_w=2), "tubelet_t"),
    (dict(family="vit", embed_dim=8, depth=1, num_heads=1, frames=2,
          height=5, width=4, tubelet_t=1, tubelet_h=2, tubelet_w=2), "tubelet_h"),
    (dict(family="vit", embed_dim=8, depth=1, num_heads=1, frames=2,
          height=4, width=6, tubelet_t=1, tubelet_h=2, tubelet_w=4), "tubelet_w"),
    (dict(family="vit", embed_dim=8, depth=1, num_heads=1, mlp_ratio=0, **GEOM),
     "mlp_ratio"),
    (dict(family="cnn3d", embed_dim=8, depth=8, frames=2, height=4, width=4),
     "downsampling"),
])
def test_invalid_config_names_violation(kwargs, fragment):
    with pytest.raises(ConfigError, match=fragment):
        ModelConfig(**kwargs)


def test_cnn3d_ignores_heads_and_tubelets():
    # documented-unused fields: any values are accepted for cnn3d
    a = ModelConfig(family="cnn3d", embed_dim=8, depth=2, num_heads=7,
                    frames=2, height=8, width=8,
                    tubelet_t=3, tubelet_h=5, tubelet_w=9)
    b = ModelConfig(family="cnn3d", embed_dim=8, depth=2,
                    frames=2, height=8, width=8)
    assert expected_parameter_stats(a) == expected_parameter_stats(b)
    ma, mb = build_encoder(a, 0), build_encoder(b, 0)
    clip = torch.rand(2, 3, 8, 8)
    fa, sa = ma(clip)
    fb, sb = mb(clip)
    assert torch.equal(fa, fb) and torch.equal(sa, sb)


# ---------------------------------------------------------------------------
# Parameter counting


def test_tiny_vit_hand_enumerated_count():
    # dim-2, 1-block ViT on 2x4x4 with 1x2x2 tubelets (8 tokens):
    #   embedding 12*2+2=26; positional 8*2=16;
    #   block: norms 2*4 + qkv (2*6+6) + proj (4+2) + fc1 (2*8+8) + fc2 (16+2) = 74
    #   head: final norm 4 + fc1 (4+2) + fc2 (2+1) = 13
    cfg = ModelConfig(family="vit", embed_dim=2, depth=1, num_heads=1, **GEOM)
    stats = count_parameters(build_encoder(cfg, 0))
    assert stats.by_group == {"embedding": 26, "positional": 16,
                              "blocks[0]": 74, "head": 13}
    assert stats.total == 129


def test_parameter_stats_invariants():
    with pytest.raises(ValueError):
        ParameterStats(total=5, by_group={"a": 2, "b": 2})
    with pytest.raises(ValueError):
        ParameterStats(total=-1, by_group={"a": -1})


@pytest.mark.parametrize("family, kwargs", [
    ("vit", dict(embed_dim=16, depth=3, num_heads=4, frames=4, height=16,
                 width=8, tubelet_t=2, tubelet_h=4, tubelet_w=4)),
    ("vit", dict(embed_dim=6, depth=2, num_heads=3, mlp_ratio=2.5, **GEOM)),
    ("cnn3d", dict(embed_dim=12, depth=3, frames=2, height=8, width=8)),
    ("cnn3d", dict(embed_dim=5, depth=1, frames=2, height=4, width=4)),
])
def test_closed_form_matches_built_model(family, kwargs):
    cfg = ModelConfig(family=family, **kwargs)
    assert expected_parameter_stats(cfg) == count_parameters(build_encoder(cfg, 3))


def test_reference_scale_configs_match_reported_sizes():
    # 224^2 inputs, 1x14x14 tubelets; published sizes 23.05M / 89.44M / 1020.71M
    combos = [(384, 12, 6, 23.05e6), (768, 12, 12, 89.44e6),
              (1408, 40, 16, 1020.71e6)]
    for dim, depth, heads, reported in combos:
        cfg = ModelConfig(family="vit", embed_dim=dim, depth=depth,
                          num_heads=heads, frames=8, height=224, width=224,
                          tubelet_t=1, tubelet_h=14, tubelet_w=14)
        total = expected_parameter_stats(cfg).total
        assert abs(total - reported) / reported < 0.10


def test_small_config_real_build_matches_closed_form():
    cfg = ModelConfig(family="vit", embed_dim=384, depth=12, num_heads=6,
                      frames=8, height=224, width=224,
                      tubelet_t=1, tubelet_h=14, tubelet_w=14)
    model = build_encoder(cfg, 0)
    assert count_parameters(model) == expected_parameter_stats(cfg)


@pytest.mark.parametrize("dim", [4, 8, 16, 32])
def test_block_weight_count_is_quadratic_in_width(dim):
    # weights per block = 12*d^2 at mlp_ratio 4; biases+norms are 13*d
    def block_params(d):
        cfg = ModelConfig(family="vit", embed_dim=d, depth=1, num_heads=1,
                          **GEOM)
        return expected_parameter_stats(cfg).by_group["blocks[0]"]

    weights = block_params(dim) - 13 * dim
    weights2 = block_params(2 * dim) - 13 * (2 * dim)
    assert weights2 == 4 * weights


@settings(max_examples=40, deadline=None)
@given(t=st.integers(1, 4), h=st.integers(1, 4), w=st.integers(1, 4),
       ft=st.integers(1, 3), fh=st.integers(1, 3), fw=st.integers(1, 3),
       dim_heads=st.sampled_from([(4, 1), (8, 2), (6, 3)]))
def test_token_count_formula(t, h, w, ft, fh, fw, dim_heads):
    dim, heads = dim_heads
    cfg = ModelConfig(family="vit", embed_dim=dim, depth=1, num_heads=heads,
                      frames=t * ft, height=h * fh, width=w * fw,
                      tubelet_t=t, tubelet_h=h, tubelet_w=w)
    assert cfg.num_tokens == ft * fh * fw
    model = build_encoder(cfg, 0)
    assert model.pos_embed.shape == (1, ft * fh * fw, dim)


# ---------------------------------------------------------------------------
# Build determinism and forward contract


def test_build_determinism_bit_identical(tiny_teacher_config):
    a = build_encoder(tiny_teacher_config, 7)
    b = build_encoder(tiny_teacher_config, 7)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert torch.equal(pa, pb)
    c = build_encoder(tiny_teacher_config, 8)
    assert any(not torch.equal(pa, pc) for pa, pc in
               zip(a.parameters(), c.parameters()))


@pytest.mark.parametrize("family", ["vit", "cnn3d"])
def test_forward_contract(family, tiny_teacher_config, tiny_cnn_config):
    cfg = tiny_teacher_config if family == "vit" else tiny_cnn_config
    model = build_encoder(cfg, 1)
    clip = torch.rand(cfg.clip_shape)
    feature, score = model(clip)
    assert feature.shape == (cfg.embed_dim,)
    assert score.shape == ()
    assert torch.isfinite(feature).all() and torch.isfinite(score)

    # purity: same input twice
    f2, s2 = model(clip)
    assert torch.equal(feature, f2) and torch.equal(score, s2)

    # all-zeros clip stays finite
    fz, sz = model(torch.zeros(cfg.clip_shape))
    assert torch.isfinite(fz).all() and torch.isfinite(sz)


def test_forward_batch_matches_single(tiny_teacher_config):
    model = build_encoder(tiny_teacher_config, 1)
    clips = torch.rand(3, *tiny_teacher_config.clip_shape)
    feats, scores = model(clips)
    assert feats.shape == (3, tiny_teacher_config.embed_dim)
    assert scores.shape == (3,)
    f0, s0 = model(clips[0])
    assert torch.allclose(f0, feats[0], atol=1e-6)
    assert torch.allclose(s0, scores[0], atol=1e-6)


def test_forward_geometry_mismatch_reports_dims(tiny_teacher_config):
    model = build_encoder(tiny_teacher_config, 1)
    with pytest.raises(ShapeError) as err:
        model(torch.rand(4, 3, 8, 8))
    assert err.value.expected == tiny_teacher_config.clip_shape
    assert err.value.actual == (4, 3, 8, 8)
    with pytest.raises(ShapeError):
        model(torch.rand(2, 3, 8, 10))


def test_forward_does_not_mutate_parameters(tiny_teacher_config):
    model = build_encoder(tiny_teacher_config, 1)
    before = {n: p.clone() for n, p in model.named_parameters()}
    model(torch.rand(4, *tiny_teacher_config.clip_shape))
    for n, p in model.named_parameters():
        assert torch.equal(before[n], p)
