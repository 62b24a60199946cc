"""Config parsing: defaults, overrides, strict validation."""

import pytest

from issfa.config import ConfigError, ExperimentConfig, config_echo, load_config


def write_cfg(tmp_path, text):
    path = tmp_path / "exp.ini"
    path.write_text(text)
    return path


class TestLoadConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, ""))
        assert cfg.sim.grid_dims == (32, 32)
        assert cfg.sim.t_rows == 400
        assert cfg.schedule.sweeps == 2000
        assert cfg.hyper.max_new_features == 6

    def test_overrides(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, """
[simulation]
grid = 8x8x8
observations = 60
theta2 = 50.0

[hyperparams]
tau_mean = 0.5
xi_mean = 0.1 0.2

[schedule]
sweeps = 10
init = prior
"""))
        assert cfg.sim.grid_dims == (8, 8, 8)
        assert cfg.sim.theta_true == (1.0, 50.0)
        assert cfg.hyper.m_tau == 0.5
        assert cfg.hyper.m_xi == (0.1, 0.2)
        assert cfg.schedule.init == "prior"

    def test_unknown_key_names_offender(self, tmp_path):
        with pytest.raises(ConfigError, match="wibble"):
            load_config(write_cfg(tmp_path, "[simulation]\nwibble = 3\n"))

    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="mystery"):
            load_config(write_cfg(tmp_path, "[mystery]\nx = 1\n"))

    def test_bad_value_names_key(self, tmp_path):
        with pytest.raises(ConfigError, match="observations"):
            load_config(write_cfg(tmp_path, "[simulation]\nobservations = lots\n"))

    def test_bad_grid(self, tmp_path):
        with pytest.raises(ConfigError, match="grid"):
            load_config(write_cfg(tmp_path, "[simulation]\ngrid = 4x4x4x4\n"))

    def test_semantic_validation(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_cfg(tmp_path, "[schedule]\ninit = magic\n"))
        with pytest.raises(ConfigError):
            load_config(write_cfg(tmp_path, "[simulation]\nactivation_prob = 0.0\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_echo_round_trip(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, "[schedule]\nsweeps = 77\n"))
        echo = config_echo(cfg)
        assert echo["schedule"]["sweeps"] == 77
        assert echo["simulation"]["grid"] == "32x32"
        # every echoed key corresponds to an accepted config key
        from issfa.config import _HYPER_KEYS, _SCHEDULE_KEYS, _SIM_KEYS

        assert set(echo["simulation"]) == set(_SIM_KEYS)
        assert set(echo["hyperparams"]) == set(_HYPER_KEYS)
        assert set(echo["schedule"]) == set(_SCHEDULE_KEYS)
