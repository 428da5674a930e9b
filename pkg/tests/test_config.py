import pytest

from latmorph.config import (PRESETS, ConfigError, RunConfig, apply_overrides, dump_config,
                             load_config, parse_config_text)


def test_defaults_validate():
    assert RunConfig().validate() is not None


@pytest.mark.parametrize("field,value", [
    ("variant", "bilingual"), ("hidden", 7), ("lr", 0.0), ("decay", 1.5), ("dropout", 1.0),
    ("batch", 0), ("rho", -1.0), ("lemma_dim", 0),
])
def test_invalid_fields_named(field, value):
    with pytest.raises(ConfigError) as err:
        apply_overrides(RunConfig(), {field: value}).validate()
    assert err.value.field == field


def test_required_paths():
    with pytest.raises(ConfigError) as err:
        RunConfig().validate(check_paths=True)
    assert err.value.field == "train_src"


def test_parse_and_coerce(tmp_path):
    text = "# comment\nbatch = 8\nlr=0.001  # inline\nstretch_mean = yes\n"
    assert parse_config_text(text) == {"batch": "8", "lr": "0.001", "stretch_mean": "yes"}
    p = tmp_path / "c.cfg"
    p.write_text(text)
    cfg = load_config(p, {"batch": "4"})
    assert cfg.batch == 4 and cfg.lr == 0.001 and cfg.stretch_mean is True
    with pytest.raises(ConfigError):
        parse_config_text("batch 8\n")
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), {"batch": "eight"})
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), {"colour": "1"})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_paper_preset(tmp_path):
    p = tmp_path / "paper.cfg"
    p.write_text("preset = paper\nepochs = 2\n")
    cfg = load_config(p).validate()
    assert (cfg.hidden, cfg.lemma_dim, cfg.features, cfg.batch, cfg.src_merges) == (512, 150, 10, 100, 16000)
    assert cfg.epochs == 2
    assert set(PRESETS) == {"desk", "paper"}


def test_dump_roundtrip(tmp_path):
    cfg = apply_overrides(RunConfig(), {"batch": "3", "train_src": "a.src"})
    p = tmp_path / "d.cfg"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg
