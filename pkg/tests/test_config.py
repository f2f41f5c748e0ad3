"""Config file loading, overrides, validation."""

import pytest

from swarm_emu.config import (
    ConfigError,
    DeviceConfig,
    config_echo,
    load_device_config,
)


def test_defaults_validate():
    cfg = DeviceConfig()
    cfg.validate()
    assert cfg.timing.mode == "aggregated"
    assert cfg.copy_engine.s_timeout_ns == 5_000


def test_load_from_yaml(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("""
device:
  n_service_units: 8
  n_queue_pairs: 16
timing:
  t_max_iops: 500000
  mode: per_request
costs:
  decode_entry_ns: 99
""")
    cfg = load_device_config(str(p))
    assert cfg.n_service_units == 8
    assert cfg.timing.t_max_iops == 500000
    assert cfg.timing.mode == "per_request"
    assert cfg.costs.decode_entry_ns == 99


def test_env_var_points_at_config(tmp_path, monkeypatch):
    p = tmp_path / "cfg.yaml"
    p.write_text("device: {queue_depth: 256}\n")
    monkeypatch.setenv("SWARM_EMU_CONFIG", str(p))
    cfg = load_device_config()
    assert cfg.queue_depth == 256


def test_overrides_win_over_file(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("timing: {t_max_iops: 1000}\n")
    cfg = load_device_config(str(p), {"timing": {"t_max_iops": 2000}})
    assert cfg.timing.t_max_iops == 2000


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("device: {warp_factor: 9}\n")
    with pytest.raises(ConfigError):
        load_device_config(str(p))


@pytest.mark.parametrize("patch", [
    dict(queue_depth=100),                              # not a power of two
    dict(n_service_units=0),
    dict(frontend_mode="centralized", n_service_units=2),
    dict(n_service_units=8, n_queue_pairs=4),           # fewer QPs than units
    dict(fetch_mode="telepathy"),
])
def test_invalid_configs_rejected(patch):
    cfg = DeviceConfig(**patch)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_invalid_timing_rejected():
    cfg = DeviceConfig()
    cfg.timing.mode = "psychic"
    with pytest.raises(ConfigError):
        cfg.validate()
    cfg = DeviceConfig()
    cfg.timing.t_max_iops = -1
    with pytest.raises(ConfigError):
        cfg.validate()


def test_echo_carries_report_fields():
    cfg = DeviceConfig()
    echo = config_echo(cfg, {"kind": "warp_coalesced"})
    assert echo["t_max_iops"] == cfg.timing.t_max_iops
    assert echo["n_units"] == cfg.n_service_units
    assert echo["mode"] == "aggregated/global"
    assert echo["workload"] == {"kind": "warp_coalesced"}
    assert echo["costs"]["decode_entry_ns"] == cfg.costs.decode_entry_ns
