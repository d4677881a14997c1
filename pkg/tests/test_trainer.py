import json
import math

import numpy as np
import pytest

from prefdiff.denoiser import Condition, load_checkpoint, params_digest
from prefdiff.diffcore import Tensor
from prefdiff.errors import (
    ConfigError,
    DatasetMismatchError,
    InsufficientDrawsError,
    NonFiniteError,
    TrainingDivergedError,
)
from prefdiff.toyworld import CpoTriplet, DpoPair, NoiseGenerator, OracleGenerator
from prefdiff.trainer import (
    AdamW,
    EvalReport,
    MetricsLog,
    TrainConfig,
    cfg_sweep,
    evaluate,
    finetune,
    median_bandwidth,
    mmd,
    read_metrics,
    relative_error_reduction,
    snapshot_steps,
    tradeoff_comparison,
    train_base,
)


@pytest.fixture
def base_config(short_cfg):
    return TrainConfig(steps=3, batch_size=16, preference=short_cfg, log_every=1)


@pytest.fixture
def ft_config(short_cfg):
    return TrainConfig.for_finetune(
        steps=4, batch_size=8, preference=short_cfg, log_every=2, lr=1e-3, snapshots=2
    )


@pytest.fixture
def triplets(rng):
    return [
        CpoTriplet(
            x0=rng.standard_normal(2),
            c_w=Condition.discrete(k % 4),
            c_l=Condition.discrete((k + 2) % 4),
            source_index=k,
        )
        for k in range(10)
    ]


@pytest.fixture
def pairs(rng):
    return [
        DpoPair(
            x0_w=rng.standard_normal(2),
            x0_l=rng.standard_normal(2),
            c=Condition.discrete(k % 4),
            score_w=1.0,
            score_l=-2.0,
            quality_w=0.0,
            quality_l=-0.3,
            source_index=k,
        )
        for k in range(10)
    ]


def _report(controllability: float, mmd_value: float, oracle: float = 1.0) -> EvalReport:
    return EvalReport(
        controllability=controllability,
        oracle_controllability=oracle,
        error_rate=oracle - controllability,
        mmd=mmd_value,
        guidance_w=1.0,
        n_samples=100,
        seed=0,
    )


def test_adamw_first_step_moves_by_lr():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    opt = AdamW([p], lr=0.1)
    opt.step({p: Tensor(np.array([0.5, -4.0, 0.0]))})
    np.testing.assert_allclose(p.data, [0.9, -1.9, 3.0], atol=1e-6)
    assert opt.steps == 1


def test_adamw_decay_is_decoupled():
    p = Tensor(np.array([2.0]), requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    opt.step({})
    np.testing.assert_allclose(p.data, [2.0 * (1 - 0.05)])


def test_adamw_validates_settings():
    p = Tensor(np.zeros(1), requires_grad=True)
    with pytest.raises(ConfigError):
        AdamW([p], lr=0.0)
    with pytest.raises(ConfigError):
        AdamW([p], lr=0.1, betas=(0.9, 1.0))


def test_finetune_defaults():
    cfg = TrainConfig.for_finetune()
    assert cfg.lr == 1e-5
    assert cfg.cond_dropout == 0.0
    assert TrainConfig().lr == 1e-3
    assert TrainConfig.for_finetune(steps=7).steps == 7


def test_snapshot_steps():
    assert snapshot_steps(10, 5) == {2, 4, 6, 8, 10}
    assert snapshot_steps(3, 5) == {1, 2, 3}
    assert snapshot_steps(0, 5) == set()


def test_train_base_is_reproducible(task, tiny_arch, base_config, short_schedule, tmp_path):
    metrics = MetricsLog(None)
    config = base_config.replace(checkpoint_every=2)
    a = train_base(task, config, tiny_arch, short_schedule, metrics, checkpoint_dir=tmp_path)
    b = train_base(task, config, tiny_arch, short_schedule)
    assert params_digest(a) == params_digest(b)
    assert len(metrics.values("base/loss")) == 3
    assert (tmp_path / "base-step000002.ckpt").exists()


def test_train_base_reports_divergence(task, tiny_arch, base_config, short_schedule,
                                       monkeypatch):
    def broken(*args, **kwargs):
        raise NonFiniteError("pretrain_loss")

    monkeypatch.setattr("prefdiff.trainer.train.pretrain_loss", broken)
    with pytest.raises(TrainingDivergedError) as info:
        train_base(task, base_config, tiny_arch, short_schedule)
    assert info.value.step == 1


def test_finetune_zero_steps_returns_copy(ref, triplets, ft_config, short_schedule):
    out = finetune("cpo", ref, triplets, ft_config.replace(steps=0), short_schedule)
    assert out is not ref
    assert params_digest(out) == params_digest(ref)


def test_finetune_rejects_other_method_data(ref, triplets, pairs, ft_config):
    with pytest.raises(DatasetMismatchError):
        finetune("dpo", ref, triplets, ft_config)
    with pytest.raises(DatasetMismatchError):
        finetune("cpo", ref, pairs, ft_config)


def test_cpo_finetune_leaves_base_alone(ref, triplets, ft_config, short_schedule):
    before = params_digest(ref)
    metrics = MetricsLog(None)
    snaps = []
    out = finetune(
        "cpo",
        ref,
        triplets,
        ft_config,
        short_schedule,
        metrics=metrics,
        on_snapshot=lambda step, p: snaps.append((step, p)),
    )
    assert params_digest(ref) == before
    assert params_digest(out) != before
    assert [s for s, _ in snaps] == [2, 4]
    assert all(p.frozen for _, p in snaps)
    assert params_digest(snaps[-1][1]) == params_digest(out)
    assert len(metrics.values("cpo/loss")) == 2
    assert all(0.0 <= v <= 1.0 for v in metrics.values("cpo/implicit_accuracy"))


def test_dpo_finetune_runs(ref, pairs, ft_config, short_schedule):
    metrics = MetricsLog(None)
    out = finetune("dpo", ref, pairs, ft_config, short_schedule, metrics=metrics)
    assert params_digest(out) != params_digest(ref)
    assert metrics.values("dpo/loss")


def test_mmd_separates_distributions(rng):
    x = rng.standard_normal((200, 2))
    y = rng.standard_normal((200, 2))
    shifted = rng.standard_normal((200, 2)) + 2.0
    assert mmd(x, y) < mmd(x, shifted)
    assert abs(mmd(x, y)) < 0.05
    with pytest.raises(ValueError):
        mmd(x[:1], y)


def test_median_bandwidth_of_coincident_points():
    assert median_bandwidth(np.ones((5, 2))) == 1.0
    assert median_bandwidth(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0


def test_evaluate_oracle_and_noise(task):
    oracle = evaluate(OracleGenerator(task), task, 200, 1.0, seed=0)
    noise = evaluate(NoiseGenerator(), task, 200, 1.0, seed=0)
    assert oracle.error_rate == pytest.approx(0.0, abs=0.03)
    assert oracle.oracle_controllability >= 0.97
    assert noise.controllability < 0.5
    assert noise.mmd > oracle.mmd
    assert oracle.conditions_digest == noise.conditions_digest
    with pytest.raises(InsufficientDrawsError):
        evaluate(OracleGenerator(task), task, 99, 1.0, seed=0)


def test_evaluate_counts_nonfinite(task):
    class Diverging:
        calls = 0

        def generate(self, c, rngs):
            return np.full((len(c), 2), np.nan)

    report = evaluate(Diverging(), task, 100, 1.0, seed=0)
    assert report.n_nonfinite == 100
    assert report.controllability == 0.0
    assert math.isinf(report.mmd)


def test_cfg_sweep_shares_conditions(ref, task, short_schedule):
    reports = cfg_sweep(ref, task, [0.0, 2.0], 100, seed=1, schedule=short_schedule)
    assert [r.guidance_w for r in reports] == [0.0, 2.0]
    assert reports[0].conditions_digest == reports[1].conditions_digest
    with pytest.raises(ConfigError):
        cfg_sweep(ref, task, [], 100, seed=1)


def test_relative_error_reduction():
    assert relative_error_reduction(_report(0.5, 0.1), _report(0.75, 0.1)) == pytest.approx(0.5)
    assert math.isnan(relative_error_reduction(_report(1.0, 0.1), _report(0.9, 0.1)))


def test_tradeoff_comparison_pairs_matched_checkpoints():
    cpo = [_report(0.50, 0.01), _report(0.70, 0.02), _report(0.95, 0.03)]
    dpo = [_report(0.51, 0.02), _report(0.69, 0.015)]
    points = tradeoff_comparison(cpo, dpo, tolerance=0.02)
    assert len(points) == 2
    assert points[0].cpo_better
    assert not points[1].cpo_better
    assert tradeoff_comparison(cpo, []) == []


def test_metrics_log_file(tmp_path, caplog):
    path = tmp_path / "metrics.jsonl"
    log = MetricsLog(path, run_id="r1", seed=4)
    log.append(2, "loss", 0.5)
    log.extend(1, {"loss": 0.75, "acc": 1.0})
    log.append(3, "loss", float("nan"))
    assert log.values("loss") == [0.75, 0.5]
    records = read_metrics(path)
    assert len(records) == 3
    assert records[0].run_id == "r1" and records[0].seed == 4
    assert json.loads(path.read_text().splitlines()[0])["metric"] == "loss"
    assert "non-finite" in caplog.text


def test_read_metrics_rejects_malformed(tmp_path):
    path = tmp_path / "metrics.jsonl"
    path.write_text('{"run_id": "r"}\n')
    with pytest.raises(DatasetMismatchError):
        read_metrics(path)


def test_checkpoints_from_training_load(task, tiny_arch, base_config, short_schedule, tmp_path):
    train_base(
        task,
        base_config.replace(checkpoint_every=1),
        tiny_arch,
        short_schedule,
        checkpoint_dir=tmp_path,
    )
    loaded = load_checkpoint(tmp_path / "base-step000003.ckpt")
    assert loaded.arch == tiny_arch
