import pytest

from leadlag.config import load_config, parse_pair
from leadlag.errors import ConfigurationError


def _cfg(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    return p


def test_defaults_and_sections(tmp_path):
    cfg = load_config(_cfg(tmp_path, "seed: 4\nstrategy:\n  lambda: 0.8\n  exit: horizon:3\n"))
    assert cfg.bootstrap.seed == 4 and cfg.strategy.lam == 0.8
    assert cfg.strategy.strategy(cfg.ema_cycle).exit.kind == "horizon"
    assert cfg.synth is None


def test_seed_override_propagates(tmp_path):
    cfg = load_config(_cfg(tmp_path, "seed: 1\nsynth:\n  n_days: 2\n"), seed=9)
    assert cfg.seed == cfg.bootstrap.seed == cfg.synth.seed == 9


def test_hash_ignores_paths_and_jobs(tmp_path):
    p = _cfg(tmp_path, "seed: 1\n")
    a = load_config(p, input="a", output="b", jobs=1)
    b = load_config(p, input="c", output="d", jobs=4)
    assert a.config_hash == b.config_hash
    assert load_config(p, seed=2).config_hash != a.config_hash


@pytest.mark.parametrize("text", ["bogus: 1\n", "strategy:\n  nope: 1\n", "horizons: [0]\n",
                                  "pairs: ['F1']\n", "leadlag_mode: fast\n", "- 1\n", "seed: [\n"])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigurationError):
        load_config(_cfg(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "none.yaml")


def test_split_day_forms():
    cfg = load_config(None)
    assert cfg.strategy.split(10) == 6
    assert parse_pair(" F1 , F3 ") == ("F1", "F3")


def test_shipped_config_matches_tuned_preset():
    from pathlib import Path

    from leadlag.synthgen import preset
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "tuned.yaml")
    assert cfg.synth == preset("tuned", n_days=20)
    assert cfg.strategy.lam is None and cfg.strategy.split(20) == 10
