import json

import pytest

from hetnetsim.config import ConfigError, SimConfig, parse_config, parse_override


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "c.json"
    f.write_text("")
    cfg = parse_config(f)
    assert cfg == SimConfig()
    assert cfg.topology.isd == 500.0
    assert cfg.topology.total_bandwidth == 10e6
    assert cfg.topology.ue_max_tx_power == 20.0
    assert cfg.algorithm.association_exponent == 0.5
    assert cfg.topology.small_per_sector == 4 and cfg.topology.users_per_sector == 25


def test_precedence(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"topology": {"users_per_sector": 10, "isd": 400}}))
    cfg = parse_config(f, ["topology.users_per_sector=3"])
    assert cfg.topology.users_per_sector == 3 and cfg.topology.isd == 400


def test_zero_users_is_valid():
    assert parse_config(None, {"topology.users_per_sector": 0}).topology.users_per_sector == 0


def test_range_error_names_field():
    with pytest.raises(ConfigError) as e:
        parse_config(None, {"algorithm.association_exponent": 1.5})
    assert e.value.path == "algorithm.association_exponent"


def test_negative_bandwidth_rejected():
    with pytest.raises(ConfigError) as e:
        parse_config(None, {"topology.total_bandwidth": -1})
    assert e.value.path == "topology.total_bandwidth"


def test_unknown_key(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"channel": {"fading": True}}))
    with pytest.raises(ConfigError) as e:
        parse_config(f)
    assert e.value.path == "channel.fading" and "unknown" in str(e.value)


def test_parse_error(tmp_path):
    f = tmp_path / "c.json"
    f.write_text("{nope")
    with pytest.raises(ConfigError):
        parse_config(f)


def test_override_syntax():
    assert parse_override("a.b=3") == ("a.b", 3)
    assert parse_override("a.b=max") == ("a.b", "max")
    with pytest.raises(ConfigError):
        parse_override("a.b")


def test_hash_tracks_content():
    a, b = SimConfig(), SimConfig()
    assert a.digest() == b.digest()
    assert a.with_overrides(**{"simulation.seed": 1}).digest() != a.digest()


def test_duplicate_policies_rejected():
    with pytest.raises(ConfigError):
        parse_config(None, {"simulation.policies": ["cio", "cio"]})


def test_derived_objects():
    cfg = SimConfig()
    assert cfg.algorithm_config().cio_offset_db == 6.0
    assert cfg.channel_params().pathloss_exponent_macro == 3.76
