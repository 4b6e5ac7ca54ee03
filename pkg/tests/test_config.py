import pytest

from sgil.config import ConfigError, TrainConfig, apply_ablation, dump_config, load_config, parse_config_text


def test_parse_flat_text_with_comments():
    values = parse_config_text("# comment\ndim = 16\nbeta=0.05  # inline\n\nhidden = none\ncutoffs = 5,10\nno_invariance = yes\n")
    assert values == {"dim": 16, "beta": 0.05, "hidden": None, "cutoffs": (5, 10), "no_invariance": True}


@pytest.mark.parametrize("text", ["dim 16", "bogus = 1", "dim = x", "no_env_gen = maybe"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_overrides_win_and_roundtrip(tmp_path):
    path = tmp_path / "a.conf"
    path.write_text("num_envs = 3\nbeta = 0.1\n")
    cfg = load_config(path, {"beta": "0.2"})
    assert cfg.num_envs == 3 and cfg.beta == 0.2
    (tmp_path / "b.conf").write_text(dump_config(cfg))
    assert load_config(tmp_path / "b.conf") == cfg


def test_digest_ignores_key_order(tmp_path):
    (tmp_path / "a.conf").write_text("dim = 8\nbeta = 0.1\n")
    (tmp_path / "b.conf").write_text("beta = 0.1\ndim = 8\n")
    assert load_config(tmp_path / "a.conf").digest() == load_config(tmp_path / "b.conf").digest()
    assert load_config(tmp_path / "a.conf").digest() != TrainConfig().digest()


def test_validation():
    for bad in ({"num_envs": 0}, {"beta": -1.0}, {"temperature": 0.0}, {"bias": 1.0}, {"loss": "hinge"},
                {"adv_period": 0}, {"monitor": "train"}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_ablation_names():
    cfg = apply_ablation(TrainConfig(), "no-invariance")
    assert cfg.penalty == 0.0 and cfg.explores
    assert apply_ablation(TrainConfig(), "no_exploration").explores is False
    with pytest.raises(ConfigError):
        apply_ablation(TrainConfig(), "no-everything")
