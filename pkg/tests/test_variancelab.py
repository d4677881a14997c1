import numpy as np
import pytest

from prefdiff.denoiser import ArchConfig, Condition, init_params
from prefdiff.errors import DatasetMismatchError, DegenerateFactorError, InsufficientDrawsError
from prefdiff.losses import as_cpo_batch
from prefdiff.schedule import q_sample
from prefdiff.toyworld import CpoTriplet, DpoPair
from prefdiff.variancelab import (
    ControlledFactors,
    VarianceReport,
    classify,
    decomposition_estimate,
    empirical_variance,
    gaussian_factor,
    matched_variance_comparison,
    score,
    score_difference,
    variance_stderr,
)


@pytest.fixture
def triplets(rng):
    return [
        CpoTriplet(
            x0=rng.standard_normal(2),
            c_w=Condition.discrete(k % 4),
            c_l=Condition.discrete((k + 1) % 4),
            source_index=k,
        )
        for k in range(8)
    ]


@pytest.fixture
def pairs(rng):
    return [
        DpoPair(
            x0_w=rng.standard_normal(2),
            x0_l=rng.standard_normal(2),
            c=Condition.discrete(k % 4),
            score_w=1.0,
            score_l=-1.0,
            quality_w=0.0,
            quality_l=-0.5,
            source_index=k,
        )
        for k in range(8)
    ]


def test_classify(triplets, pairs):
    assert classify(triplets) == "cpo"
    assert classify(pairs[0]) == "dpo"
    with pytest.raises(DatasetMismatchError):
        classify(triplets + pairs)
    with pytest.raises(DatasetMismatchError):
        classify(42)


def test_score_difference_matches_scores(ref, triplets, short_schedule, rng):
    batch = as_cpo_batch(triplets)
    eps = rng.standard_normal((8, 2))
    x_t = q_sample(short_schedule, batch.x0, 10, eps)
    expected = score(ref, x_t, batch.c_w, 10, eps) - score(ref, x_t, batch.c_l, 10, eps)
    np.testing.assert_allclose(score_difference(ref, triplets, 10, eps, short_schedule), expected)


def test_identical_conditions_give_zero_difference(ref, short_schedule, rng):
    same = CpoTriplet(np.array([0.3, 0.4]), Condition.discrete(1), Condition.discrete(1))
    out = score_difference(ref, same, 5, rng.standard_normal(2), short_schedule)
    assert out == pytest.approx([0.0])


def test_variance_stderr_of_known_sample():
    values = np.array([1.0, 2.0, 3.0, 4.0])
    var, stderr = variance_stderr(values)
    assert var == pytest.approx(np.var(values, ddof=1))
    m4 = np.mean((values - values.mean()) ** 4)
    assert stderr == pytest.approx(np.sqrt((m4 - var**2) / 4))


def test_empirical_variance_report(ref, triplets, short_schedule):
    report = empirical_variance(ref, triplets, "fixed", 1000, seed=0, t_star=10,
                                schedule=short_schedule)
    assert report.var_cpo is not None and report.var_cpo >= 0.0
    assert report.var_dpo is None
    assert report.t_star == 10
    est = report.estimates["cpo"]
    assert est.n_examples == 8
    assert est.conditional_on_t == pytest.approx(est.variance, rel=1e-2)
    record = report.to_record()
    assert record["n_samples"] == 1000
    assert "var_dpo" not in record


def test_empirical_variance_is_seeded(ref, pairs, short_schedule):
    a = empirical_variance(ref, pairs, "uniform", 1000, seed=3, schedule=short_schedule)
    b = empirical_variance(ref, pairs, "uniform", 1000, seed=3, schedule=short_schedule)
    assert a.var_dpo == b.var_dpo
    assert a.t_star is None


def test_empirical_variance_needs_draws(ref, triplets):
    with pytest.raises(InsufficientDrawsError):
        empirical_variance(ref, triplets, "fixed", 999, seed=0)


def test_matched_comparison(ref, triplets, pairs, short_schedule):
    report = matched_variance_comparison(ref, triplets, pairs, 10, 1000, 0, short_schedule)
    assert report.var_cpo is not None and report.var_dpo is not None
    assert report.ordered == (report.var_cpo < report.var_dpo)
    assert report.gradient_norm_proxy is not None and report.gradient_norm_proxy >= 0.0
    with pytest.raises(ValueError):
        matched_variance_comparison(ref, pairs, triplets, 10, 1000, 0, short_schedule)


def test_report_ordering_needs_both():
    assert not VarianceReport(n_samples=1, seed=0, var_cpo=1.0).ordered
    assert VarianceReport(n_samples=1, seed=0, var_cpo=1.0, var_dpo=2.0).ordered


def _factors(ctrl, nuis, c=Condition.discrete(1)):
    return ControlledFactors(
        x=np.array([0.2, -0.4]), c=c, t=10, eps=np.array([0.5, 0.1]), ctrl=ctrl, nuis=nuis
    )


def test_disabled_factor_has_zero_variance(ref):
    d = decomposition_estimate(ref, _factors(None, gaussian_factor(0.1, 2)), 1000, seed=0)
    assert d.v_ctrl == 0.0
    assert d.v_cross == pytest.approx(0.0, abs=1e-12)
    assert d.v_joint == pytest.approx(d.v_nuis)
    assert d.total == pytest.approx(d.v_ctrl + d.v_nuis + 2 * d.v_cross)


def test_decomposition_components(ref):
    d = decomposition_estimate(
        ref, _factors(gaussian_factor(0.1, 4), gaussian_factor(0.1, 2)), 2000, seed=1
    )
    assert d.v_ctrl > 0.0 and d.v_nuis > 0.0
    assert d.v_joint == pytest.approx(d.v_ctrl + d.v_nuis + 2 * d.v_cross)
    assert d.stderr_cross >= 0.0
    assert d.n == 2000


def test_continuous_control_acts_on_condition():
    params = init_params(
        ArchConfig.create(condition_kind="continuous", hidden=8, depth=1, time_dim=4, embed_dim=4)
    )
    factors = _factors(gaussian_factor(0.1, 2), None, c=Condition.continuous([1.0, 0.0]))
    d = decomposition_estimate(params, factors, 1000, seed=0)
    assert d.v_ctrl > 0.0
    assert d.v_nuis == 0.0


def test_discrete_control_acts_on_embedding(ref):
    # layer0 rows: x_t features, then time features, then the condition embedding
    weight = ref.tensors["layer0.weight"].data
    factors = _factors(gaussian_factor(0.1, 4), gaussian_factor(0.1, 2))

    weight[-4:] = 0.0
    blind_to_condition = decomposition_estimate(ref, factors, 1000, seed=0)
    assert blind_to_condition.v_ctrl == 0.0
    assert blind_to_condition.v_nuis > 0.0

    weight[-4:] = 1.0
    weight[:2] = 0.0
    blind_to_sample = decomposition_estimate(ref, factors, 1000, seed=0)
    assert blind_to_sample.v_nuis == 0.0
    assert blind_to_sample.v_ctrl > 0.0


def test_zero_variance_generator_rejected(ref):
    def constant(rng, n):
        return np.ones((n, 4))

    with pytest.raises(DegenerateFactorError):
        decomposition_estimate(ref, _factors(constant, None), 1000, seed=0)
    with pytest.raises(InsufficientDrawsError):
        decomposition_estimate(ref, _factors(None, None), 10, seed=0)


def test_directional_factor():
    draw = gaussian_factor(0.5, 2, direction=np.array([1.0, 0.0]))
    out = draw(np.random.default_rng(0), 100)
    assert out.shape == (100, 2)
    assert np.all(out[:, 1] == 0.0)
