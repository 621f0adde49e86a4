import pytest

from config import dump_config, load_config, parse_flat, parse_overrides, read_flat
from errors import ConfigError
from models import ExperimentConfig


def test_read_flat_accepts_sections_and_dotted_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# sweep over rough data\n"
        "[problem]\n"
        "n_modes=32\n"
        "gamma=0.5\n"
        "\n"
        "[noise]\n"
        "eps=0.01,0.1\n"
        "stopping.mu=2.5\n"
    )
    flat = read_flat(path)
    assert flat["problem.n_modes"] == "32"
    assert flat["problem.gamma"] == "0.5"
    assert flat["noise.eps"] == "0.01,0.1"
    assert flat["stopping.mu"] == "2.5"


def test_load_config_applies_file_then_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("problem.n_modes=16\nnoise.eps=0.01,0.1,0.001\nschedule.name=constant\n")
    config = load_config(path, ["schedule.d=0.25", "noise.seeds=3,4"])
    assert config.problem.n_modes == 16
    assert config.noise.eps == [0.1, 0.01, 0.001]
    assert config.noise.seeds == [3, 4]
    assert config.schedule.name == "constant"
    assert config.schedule.d == 0.25


def test_flat_round_trip():
    config = load_config(overrides=[
        "problem.spectrum=linear-square", "problem.gamma=0.75", "data.generator=source-condition",
        "data.p=2", "noise.eps=0.1,0.001", "run.allow_oracle=true", "stopping.tol=1e-9",
    ])
    assert parse_flat(config.to_flat()) == config
    assert ExperimentConfig() == parse_flat(ExperimentConfig().to_flat())


def test_dump_config_reads_back(tmp_path):
    config = load_config(overrides=["noise.eps=0.3,0.03", "data.generator=rough"])
    path = tmp_path / "dumped.cfg"
    path.write_text(dump_config(config))
    assert load_config(path) == config


def test_gamma_outside_bounds_names_interval():
    with pytest.raises(ConfigError, match="gamma"):
        load_config(overrides=["problem.gamma=6"])


@pytest.mark.parametrize("override", [
    "problem.horizon_days=3",
    "telemetry.enabled=true",
    "n_modes=8",
    "noise.eps=0.1,-0.01",
    "stopping.mu=1",
    "schedule.name=cesaro",
    "run.parallel=0",
    "schedule.d=1.5",
    "data.mode=0",
    "data.mode=65",
])
def test_invalid_settings_are_config_errors(override):
    with pytest.raises(ConfigError):
        load_config(overrides=[override])


def test_override_syntax():
    assert parse_overrides(["a.b = 1", "c.d=x=y"]) == {"a.b": "1", "c.d": "x=y"}
    with pytest.raises(ConfigError):
        parse_overrides(["problem.gamma"])


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_mu_default_follows_generator():
    assert load_config().stopping_rule().mu == 1.5
    assert load_config(overrides=["data.generator=source-condition"]).stopping_rule().mu == 2.5
    explicit = load_config(overrides=["data.generator=source-condition", "stopping.mu=3"])
    assert explicit.stopping_rule().mu == 3.0
    assert "stopping.mu" not in load_config().to_flat()
