import math

import numpy as np
import pytest
from scipy import special

from prefdiff.denoiser import Condition, ConditionBatch, clone_trainable
from prefdiff.diffcore import backward, finite_diff_check, mean, relu, scale, square, subtract
from prefdiff.errors import (
    ConditionKindMismatch,
    ConfigError,
    DatasetMismatchError,
    InsufficientDrawsError,
    ShapeError,
)
from prefdiff.losses import (
    CpoBatch,
    PreferenceConfig,
    as_cpo_batch,
    cpo_final_loss,
    cpo_logsigmoid_loss,
    cpo_terms,
    dpo_loss,
    gradient_identity_check,
    implicit_accuracy,
    jensen_bound_check,
    pretrain_loss,
    total_loss,
)
from prefdiff.schedule import sample_timesteps


@pytest.fixture
def draws(rng, short_schedule):
    t = sample_timesteps(rng, short_schedule, 6)
    eps = rng.standard_normal((6, 2))
    t2 = sample_timesteps(rng, short_schedule, 6)
    eps2 = rng.standard_normal((6, 2))
    return t, eps, t2, eps2


def test_alpha_scale_is_derived():
    cfg = PreferenceConfig()
    assert cfg.alpha_scale == pytest.approx(2500.0)
    assert cfg.margin == 0.01
    assert cfg.reg_lambda == 0.05
    other = PreferenceConfig.from_alpha(100.0, T=200)
    assert other.beta_kl == pytest.approx(1.0)
    assert other.alpha_scale == pytest.approx(100.0)
    assert cfg.replace(T=500).alpha_scale == pytest.approx(1250.0)


def test_unknown_preference_key():
    with pytest.raises(ConfigError) as info:
        PreferenceConfig.create(margn=0.1)
    assert info.value.keys == ["margn"]


def test_losses_at_reference_have_closed_forms(ref, cpo_batch, dpo_batch, draws, short_cfg,
                                               short_schedule):
    theta = clone_trainable(ref)
    t, eps, _, _ = draws
    assert dpo_loss(theta, ref, dpo_batch, t, eps, short_cfg, short_schedule).item() == (
        pytest.approx(math.log(2.0), abs=1e-12)
    )
    assert cpo_logsigmoid_loss(theta, ref, cpo_batch, t, eps, short_cfg, short_schedule).item() == (
        pytest.approx(math.log(2.0), abs=1e-12)
    )
    final = cpo_final_loss(theta, ref, cpo_batch, t, eps, short_cfg, short_schedule)
    assert final.item() == 0.0
    grads = backward(final, theta.parameters())
    assert all(np.all(g.data == 0.0) for g in grads.values())


def test_reference_never_receives_gradient(theta, ref, dpo_batch, draws, short_cfg,
                                           short_schedule):
    t, eps, _, _ = draws
    loss = dpo_loss(theta, ref, dpo_batch, t, eps, short_cfg, short_schedule)
    grads = backward(loss, ref.parameters() + theta.parameters())
    assert all(np.all(grads[p].data == 0.0) for p in ref.parameters())
    assert any(np.any(grads[p].data != 0.0) for p in theta.parameters())


def test_gradient_identity(theta, ref, cpo_batch, draws, short_cfg, short_schedule):
    t, eps, _, _ = draws
    err = gradient_identity_check(theta, ref, cpo_batch, t, eps, short_cfg, short_schedule)
    assert err < 1e-6


@pytest.mark.parametrize("weight", ["contrast", "sigmoid"])
def test_losses_match_finite_differences(theta, ref, cpo_batch, dpo_batch, draws, short_cfg,
                                         short_schedule, weight):
    cfg = short_cfg.replace(cpo_weight=weight)
    t, eps, t2, eps2 = draws
    losses = [
        lambda: pretrain_loss(theta, cpo_batch.x0, cpo_batch.c_w, t, eps, short_schedule),
        lambda: dpo_loss(theta, ref, dpo_batch, t, eps, cfg, short_schedule),
        lambda: cpo_final_loss(theta, ref, cpo_batch, t, eps, cfg, short_schedule),
        lambda: total_loss(theta, ref, cpo_batch, t, eps, t2, eps2, cfg, short_schedule),
    ]
    for loss in losses:
        assert finite_diff_check(lambda _p, f=loss: f(), theta.parameters(), floor=1e-6) < 1e-4


def test_total_loss_adds_weighted_pretraining(theta, ref, cpo_batch, draws, short_cfg,
                                              short_schedule):
    t, eps, t2, eps2 = draws
    final = cpo_final_loss(theta, ref, cpo_batch, t, eps, short_cfg, short_schedule).item()
    reg = pretrain_loss(theta, cpo_batch.x0, cpo_batch.c_w, t2, eps2, short_schedule).item()
    total = total_loss(theta, ref, cpo_batch, t, eps, t2, eps2, short_cfg, short_schedule).item()
    assert total == pytest.approx(final + short_cfg.reg_lambda * reg, rel=1e-12)

    no_reg = short_cfg.replace(reg_lambda=0.0)
    assert total_loss(theta, ref, cpo_batch, t, eps, t2, eps2, no_reg, short_schedule).item() == (
        pytest.approx(final, rel=1e-12)
    )


def test_final_loss_weighting_modes(theta, ref, cpo_batch, draws, short_cfg, short_schedule):
    t, eps, _, _ = draws
    terms = cpo_terms(theta, ref, cpo_batch, t, eps, short_schedule, short_cfg)
    contrast = short_cfg.alpha_scale * terms.gap
    hinge = np.maximum(terms.d_theta.data + short_cfg.margin, 0.0)

    got = cpo_final_loss(theta, ref, cpo_batch, t, eps, short_cfg, short_schedule).item()
    assert got == pytest.approx(np.mean(contrast * hinge))

    sig = short_cfg.replace(cpo_weight="sigmoid")
    got = cpo_final_loss(theta, ref, cpo_batch, t, eps, sig, short_schedule).item()
    assert got == pytest.approx(np.mean(special.expit(contrast) * hinge))

    raw = short_cfg.replace(truncate=False)
    got = cpo_final_loss(theta, ref, cpo_batch, t, eps, raw, short_schedule).item()
    assert got == pytest.approx(np.mean(contrast * terms.d_theta.data))


def _grads(loss, params):
    grads = backward(loss, params)
    return [grads[p].data for p in params]


def test_contrast_weight_has_quadratic_gradient(theta, ref, cpo_batch, draws, short_cfg,
                                                short_schedule):
    # with every hinge active the contrast weight differentiates like (alpha / 2) * gap^2
    cfg = short_cfg.replace(margin=1e6)
    t, eps, _, _ = draws
    params = theta.parameters()
    final = cpo_final_loss(theta, ref, cpo_batch, t, eps, cfg, short_schedule)
    terms = cpo_terms(theta, ref, cpo_batch, t, eps, short_schedule, cfg)
    quadratic = scale(mean(square(subtract(terms.d_theta, terms.d_ref))), cfg.alpha_scale / 2.0)
    for got, want in zip(_grads(final, params), _grads(quadratic, params), strict=True):
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


def test_sigmoid_weight_moves_away_from_reference(ref, cpo_batch, draws, short_cfg,
                                                  short_schedule):
    theta = clone_trainable(ref)
    cfg = short_cfg.replace(margin=1e6, cpo_weight="sigmoid")
    t, eps, _, _ = draws
    params = theta.parameters()
    final = cpo_final_loss(theta, ref, cpo_batch, t, eps, cfg, short_schedule)
    terms = cpo_terms(theta, ref, cpo_batch, t, eps, short_schedule, cfg)
    hinge = mean(relu(terms.d_theta + cfg.margin))
    got, want = _grads(final, params), _grads(hinge, params)
    assert any(np.any(g != 0.0) for g in got)
    for g, w in zip(got, want, strict=True):
        np.testing.assert_allclose(g, 0.5 * w, rtol=1e-12, atol=1e-15)

    contrast = cfg.replace(cpo_weight="contrast")
    final = cpo_final_loss(theta, ref, cpo_batch, t, eps, contrast, short_schedule)
    assert all(np.all(g == 0.0) for g in _grads(final, params))


def test_losses_ignore_row_order(theta, ref, cpo_batch, dpo_batch, draws, short_cfg,
                                 short_schedule):
    t, eps, t2, eps2 = draws
    perm = np.random.default_rng(5).permutation(len(cpo_batch))
    shuffled = (t[perm], eps[perm], t2[perm], eps2[perm])
    for cfg in (short_cfg, short_cfg.replace(cpo_weight="sigmoid")):
        pairs = [
            (dpo_loss, dpo_batch, dpo_batch.take(perm)),
            (cpo_logsigmoid_loss, cpo_batch, cpo_batch.take(perm)),
            (cpo_final_loss, cpo_batch, cpo_batch.take(perm)),
        ]
        for loss, batch, permuted in pairs:
            before = loss(theta, ref, batch, t, eps, cfg, short_schedule).item()
            after = loss(theta, ref, permuted, *shuffled[:2], cfg, short_schedule).item()
            assert after == pytest.approx(before, rel=1e-12, abs=1e-15)
        before = total_loss(theta, ref, cpo_batch, *draws, cfg, short_schedule).item()
        after = total_loss(theta, ref, cpo_batch.take(perm), *shuffled, cfg, short_schedule)
        assert after.item() == pytest.approx(before, rel=1e-12, abs=1e-15)


def test_larger_margin_never_lowers_loss(theta, ref, cpo_batch, draws, short_cfg,
                                         short_schedule):
    t, eps, t2, eps2 = draws
    margins = [0.0, 0.01, 0.1, 1.0, 10.0]
    finals, totals = [], []
    for m in margins:
        cfg = short_cfg.replace(margin=m, cpo_weight="sigmoid")
        finals.append(cpo_final_loss(theta, ref, cpo_batch, t, eps, cfg, short_schedule).item())
        totals.append(
            total_loss(theta, ref, cpo_batch, t, eps, t2, eps2, cfg, short_schedule).item()
        )
    assert short_cfg.reg_lambda > 0.0
    assert np.all(np.diff(finals) >= 0.0)
    assert np.all(np.diff(totals) >= 0.0)
    assert finals[-1] > finals[0]


def test_jensen_bound_holds(theta, ref, cpo_batch, short_cfg, short_schedule, rng):
    report = jensen_bound_check(theta, ref, cpo_batch, 2000, short_cfg, rng, short_schedule)
    assert report.holds
    assert report.margin >= 0.0
    assert report.rhs == pytest.approx(report.lhs + report.margin)
    with pytest.raises(InsufficientDrawsError):
        jensen_bound_check(theta, ref, cpo_batch, 999, short_cfg, rng, short_schedule)


def test_implicit_accuracy():
    assert implicit_accuracy(np.array([-1.0, 2.0, -3.0, 0.0])) == 0.5


def test_batch_validation(rng):
    with pytest.raises(ConditionKindMismatch):
        CpoBatch(
            np.zeros((1, 2)),
            ConditionBatch("discrete", np.array([0])),
            ConditionBatch("continuous", np.zeros((1, 2))),
        )
    with pytest.raises(ShapeError):
        CpoBatch(
            np.zeros((2, 2)),
            ConditionBatch("discrete", np.array([0])),
            ConditionBatch("discrete", np.array([1])),
        )
    with pytest.raises(DatasetMismatchError):
        as_cpo_batch([])


def test_noise_must_match_samples(theta, ref, cpo_batch, short_cfg, short_schedule):
    with pytest.raises(ShapeError):
        cpo_final_loss(theta, ref, cpo_batch, 3, np.zeros((2, 2)), short_cfg, short_schedule)


def test_single_record_is_stacked(theta, ref, short_cfg, short_schedule):
    class Triplet:
        x0 = np.array([0.5, 0.5])
        c_w = Condition.discrete(0)
        c_l = Condition.discrete(2)

    loss = cpo_logsigmoid_loss(theta, ref, Triplet(), 4, np.ones(2), short_cfg, short_schedule)
    assert np.isfinite(loss.item())
