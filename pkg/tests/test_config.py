import pytest
import yaml

from lemur.config import (
    ABLATIONS,
    ConfigError,
    RunConfig,
    dump_config,
    from_dict,
    load_config,
    save_config,
    to_dict,
)


def test_desk_profile_defaults():
    cfg = RunConfig.desk()
    assert cfg.train.batch_size == 64
    assert cfg.doc_encoder.model_dim == 32 and cfg.query_encoder.model_dim == 32
    assert (cfg.query_encoder.layers, cfg.doc_encoder.layers) == (2, 2)
    assert cfg.data.history_caps == (8, 64)
    assert cfg.data.vocab_size == 4096
    assert cfg.sqdc.temperature == 50.0
    assert cfg.train.lr == 1e-3
    assert cfg.sampling.workers == 2


def test_production_profile_sizes():
    cfg = RunConfig.production()
    assert cfg.train.batch_size == 2048
    assert cfg.doc_encoder.model_dim == 128
    assert (cfg.query_encoder.layers, cfg.doc_encoder.layers) == (2, 4)
    assert cfg.data.history_caps == (50, 1000)


def test_every_table_ablation_has_a_flag():
    for name in ("stop_gradient", "no_sqdc", "no_session_mask", "no_short_seq", "no_long_seq", "no_cosine_sim"):
        assert name in ABLATIONS
        assert getattr(RunConfig().with_ablations(name).ablations, name)


def test_no_sqdc_forces_zero_lambda():
    cfg = RunConfig().with_ablations("no_sqdc")
    assert cfg.effective_lambda() == 0.0
    assert not cfg.effective_sqdc().enabled
    assert RunConfig().effective_lambda() == 1.0


def test_no_session_mask_flag():
    assert not RunConfig().with_ablations("no_session_mask").effective_sqdc().session_mask_enabled


def test_unknown_ablation_lists_valid_names():
    with pytest.raises(ConfigError, match="stop_gradient"):
        RunConfig().with_ablations("no_such_thing")


def test_yaml_round_trip(tmp_path):
    cfg = RunConfig().with_ablations("no_long_seq")
    cfg.train.lr = 3e-4
    path = tmp_path / "c.yaml"
    save_config(cfg, path)
    back = load_config(path)
    assert to_dict(back) == to_dict(cfg)
    assert yaml.safe_load(dump_config(cfg)) == to_dict(cfg)


def test_partial_yaml_fills_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("train:\n  steps: 7\nsampling:\n  p: 50\n  q: 20\n")
    cfg = load_config(path)
    assert cfg.train.steps == 7 and cfg.sampling.q == 20
    assert cfg.train.batch_size == 64


@pytest.mark.parametrize(
    "raw, field",
    [
        ({"data": {"vocab_size": 0}}, "vocab_size"),
        ({"sampling": {"p": 10, "q": 20}}, "q <= p"),
        ({"train": {"lr": 0}}, "train.lr"),
        ({"train": {"sqdc_weight": -1}}, "sqdc_weight"),
        ({"train": {"nope": 1}}, "nope"),
        ({"bogus": {}}, "bogus"),
        ({"doc_encoder": {"vocab_size": 10}}, "doc_encoder.vocab_size"),
        ({"doc_encoder": {"max_positions": 32}}, "max_positions"),
        ({"seq": {"decoder_heads": 5}}, "decoder_heads"),
    ],
)
def test_invalid_configs_name_the_field(raw, field):
    with pytest.raises(ConfigError, match=field):
        from_dict(raw)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("train: [1, 2\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(bad)
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("3\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(scalar)


def test_fingerprint_tracks_topology_only():
    base = RunConfig()
    tweaked = RunConfig()
    tweaked.train.lr = 0.5
    tweaked.sampling.p = 50.0
    assert base.fingerprint() == tweaked.fingerprint()
    other = from_dict({"train": {"id_dim": 4}})
    assert other.fingerprint() != base.fingerprint()
