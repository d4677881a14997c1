import argparse
import json

import pytest

import prefdiff.cli.verify as verify_suite
from prefdiff.cli import main as cli_main
from prefdiff.cli.config_io import (
    RunConfig,
    flatten,
    from_flat,
    load_config,
    parse_config,
    render_config,
    write_config,
)
from prefdiff.cli.main import build_parser, main, parse_scales
from prefdiff.cli.report import render_csv, write_report
from prefdiff.cli.verify import get_all_checks, get_fast_checks, run_checks
from prefdiff.denoiser import load_checkpoint, params_digest
from prefdiff.errors import ConfigError, ConfigMigrationError
from prefdiff.toyworld import CpoTriplet, DpoPair, read_records
from prefdiff.trainer import MetricsLog

TINY = {
    "schedule.T": 20,
    "schedule.beta_start": 1e-3,
    "schedule.beta_end": 0.3,
    "loss.T": 20,
    "model.hidden": 8,
    "model.depth": 1,
    "model.time_dim": 4,
    "model.embed_dim": 4,
    "train.steps": 5,
    "train.batch_size": 16,
    "finetune.steps": 3,
    "finetune.batch_size": 8,
    "finetune.snapshots": 1,
    "curate.source_size": 20,
    "curate.n_samples": 4,
    "curate.delta": 0.0,
    "eval.n_samples": 100,
    "variance.n_draws": 1000,
    "variance.t_star": 10,
    "run.deterministic": True,
}


@pytest.fixture
def tiny_config(tmp_path):
    config = RunConfig().with_overrides({**TINY, "run.out_dir": str(tmp_path / "run")})
    return write_config(config, tmp_path / "tiny.cfg")


def test_render_parse_is_byte_stable():
    config = RunConfig().with_overrides({"run.seed": 7, "loss.margin": 0.02})
    text = render_config(config)
    assert text.startswith("# prefdiff run configuration\n")
    assert render_config(parse_config(text)) == text
    assert "run.seed=7\n" in text
    assert 'task.condition_kind="discrete"\n' in text


def test_flatten_leaves_out_derived_keys():
    flat = flatten(RunConfig())
    assert "loss.alpha_scale" not in flat
    assert not any(k.startswith("train.preference") for k in flat)
    assert "train.seed" not in flat
    assert flat["schema_version"] == 1


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as info:
        parse_config("loss.margn=0.1\n")
    assert "loss.margn" in info.value.keys


def test_other_schema_version_is_rejected():
    with pytest.raises(ConfigMigrationError) as info:
        parse_config("schema_version=2\n")
    assert info.value.found == 2


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigError) as info:
        parse_config("run.seed=1\nrun.seed=2\n")
    assert info.value.keys == ["run.seed"]
    with pytest.raises(ConfigError):
        parse_config("run.seed\n")


def test_derived_keys_are_rejected():
    with pytest.raises(ConfigError) as info:
        from_flat({"train.seed": 3})
    assert info.value.keys == ["train.seed"]


def test_schedule_and_loss_lengths_must_agree():
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({"schedule.T": 50})
    config = RunConfig().with_overrides({"schedule.T": 50, "loss.T": 50})
    assert config.schedule.build().T == 50


def test_resolved_sections():
    config = RunConfig().with_overrides({"run.seed": 11, "loss.margin": 0.03})
    assert config.train_config().seed == 11
    assert config.finetune_config().preference.margin == 0.03
    assert config.finetune_config().lr == 1e-5
    assert config.arch().seed == 11
    assert config.loss.alpha_scale == pytest.approx(2500.0)
    assert not config.context().debug
    assert RunConfig().with_overrides({"run.debug": True}).context().debug


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text('# note\n\nrun.run_id="x"\n  run.seed = 4\n')
    config = load_config(path)
    assert config.run.run_id == "x"
    assert config.run.seed == 4


def test_context_honours_thread_override(monkeypatch):
    monkeypatch.setenv("PREFDIFF_THREADS", "3")
    ctx = RunConfig().with_overrides({"run.deterministic": False}).context()
    assert ctx.workers == 3
    assert ctx.effective_workers() == 3


def test_parse_scales():
    assert parse_scales("0,1,2.5") == [0.0, 1.0, 2.5]
    for bad in ("", "a,b", "1,-1"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_scales(bad)


def test_method_is_required(capsys):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["curate"])
    assert info.value.code == 2
    assert "--method" in capsys.readouterr().err


def test_check_registry():
    fast = {c.name for c in get_fast_checks()}
    every = {c.name for c in get_all_checks()}
    assert fast and fast < every


def test_fast_checks_pass():
    results = run_checks(get_fast_checks())
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]


def test_finite_difference_check_covers_both_weights(monkeypatch):
    seen = set()
    real = verify_suite.cpo_final_loss

    def recording(theta, ref, triplet, t, eps, cfg, schedule=None):
        seen.add(cfg.cpo_weight)
        return real(theta, ref, triplet, t, eps, cfg, schedule)

    monkeypatch.setattr(verify_suite, "cpo_final_loss", recording)
    assert verify_suite.check_finite_differences(0, instances=1) < 1e-4
    assert seen == {"contrast", "sigmoid"}


def test_verify_command(tmp_path, capsys):
    assert main(["verify", "--fast", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    assert "checks passed" in out
    saved = load_config(tmp_path / "verify.cfg")
    assert saved == RunConfig().with_overrides({"run.out_dir": str(tmp_path)})


def test_errors_become_one_line(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("loss.margn=0.1\n")
    assert main(["verify", "--fast", "--config", str(path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("Error: ConfigError: ")
    assert "\n" not in err


def test_missing_checkpoint_is_reported(tmp_path, capsys):
    code = main(["eval", "--out", str(tmp_path), "--checkpoint", str(tmp_path / "none.ckpt")])
    assert code == 1
    assert capsys.readouterr().err.startswith("Error: FileNotFoundError")


def test_report_is_sorted_and_stable(tmp_path):
    a = MetricsLog(tmp_path / "b" / "metrics.jsonl", run_id="b", seed=1)
    a.append(2, "loss", 0.25)
    a.append(1, "loss", 0.5)
    b = MetricsLog(tmp_path / "a" / "metrics.jsonl", run_id="a", seed=0)
    b.append(1, "acc", 1.0)
    path, rows = write_report(tmp_path, tmp_path / "report.csv")
    text = path.read_text()
    assert rows == 3
    assert text.splitlines() == [
        "source,run_id,seed,metric,step,value",
        "a/metrics.jsonl,a,0,acc,1,1.0",
        "b/metrics.jsonl,b,1,loss,1,0.5",
        "b/metrics.jsonl,b,1,loss,2,0.25",
    ]
    assert write_report(tmp_path, tmp_path / "again.csv")[0].read_text() == text
    assert render_csv([]) == "source,run_id,seed,metric,step,value\n"


def test_pipeline_end_to_end(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    common = ["--config", str(tiny_config)]

    assert main(["train-base", *common]) == 0
    base = load_checkpoint(out / "base.ckpt")
    assert (out / "train-base.cfg").exists()

    assert main(["curate", "--method", "cpo", *common]) == 0
    assert "generator calls: 20" in capsys.readouterr().out
    assert main(["curate", "--method", "dpo", *common]) == 0
    assert "generator calls: 80" in capsys.readouterr().out
    cpo = read_records(out / "curated-cpo.jsonl")
    dpo = read_records(out / "curated-dpo.jsonl")
    assert cpo and all(isinstance(r, CpoTriplet) for r in cpo)
    assert dpo and all(isinstance(r, DpoPair) for r in dpo)

    assert main(["finetune", "--method", "cpo", *common]) == 0
    tuned = load_checkpoint(out / "cpo.ckpt")
    assert params_digest(tuned) != params_digest(base)
    assert (out / "cpo-snapshot-000003.ckpt").exists()
    assert params_digest(load_checkpoint(out / "base.ckpt")) == params_digest(base)

    code = main(
        ["eval", *common, "--checkpoint", str(out / "cpo.ckpt"), "--baseline",
         str(out / "base.ckpt")]
    )
    assert code == 0
    assert "relative_reduction=" in capsys.readouterr().out

    assert main(["eval", *common, "--cfg-sweep", "--cfg-scales", "0,2"]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("w=")]
    assert [ln.split()[0] for ln in lines] == ["w=0", "w=2"]

    assert main(["variance", *common]) == 0
    assert "var_cpo < var_dpo:" in capsys.readouterr().out

    assert main(["report", *common]) == 0
    report = (out / "report.csv").read_text().splitlines()
    assert report[0] == "source,run_id,seed,metric,step,value"
    metrics = {line.split(",")[3] for line in report[1:]}
    assert "base/loss" in metrics
    assert "cpo/loss" in metrics
    assert any(m.startswith("variance/t=10/") for m in metrics)


def test_pipeline_is_reproducible(tiny_config, tmp_path):
    common = ["--config", str(tiny_config)]
    assert main(["train-base", *common]) == 0
    first = (tmp_path / "run" / "base.ckpt").read_bytes()
    assert main(["train-base", *common]) == 0
    assert (tmp_path / "run" / "base.ckpt").read_bytes() == first


def test_package_entry_point_is_main():
    assert cli_main is main


def test_rendered_values_are_json():
    for line in render_config(RunConfig()).splitlines()[1:]:
        _, _, raw = line.partition("=")
        json.loads(raw)
