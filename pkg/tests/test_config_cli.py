import numpy as np
import pytest

from otfspred.cli import main
from otfspred.config import (ConfigError, SimConfig, desk_profile, load_config,
                             parse_flat_config, save_config, table3_profile)


class TestConfigValidation:
    def test_profiles_are_valid(self):
        desk_profile()
        table3_profile()

    @pytest.mark.parametrize("field,value,fragment", [
        ("Q", 4, "odd"),
        ("K", 20, "K_C <= K <= L"),
        ("Q_s", 99, "exceeds N_r"),
        ("Q_sg", 11, "violates Q_sg"),
        ("G", 100, "exceeds MN"),
        ("N_f", 3, "not divisible"),
    ])
    def test_violations_name_the_bound(self, field, value, fragment):
        cfg = SimConfig(**{field: value}) if field != "N_f" else \
            SimConfig(N_f=3, delta=2)
        with pytest.raises(ConfigError, match=fragment):
            cfg.validate()

    def test_doppler_bound_on_q(self):
        # very high speed pushes the minimum basis order above 3
        cfg = SimConfig(v=3e4)
        with pytest.raises(ConfigError, match="2\\*ceil"):
            cfg.validate()

    def test_derived_quantities(self):
        cfg = desk_profile()
        assert cfg.MN == 128
        assert cfg.T_s == pytest.approx(1 / (32 * 30e3))
        assert cfg.f_max == pytest.approx(cfg.f_c * cfg.v / 299792458.0)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = desk_profile(G=16, snr_db=(0.0, 10.0), seed=42)
        path = tmp_path / "c.cfg"
        save_config(cfg, str(path))
        loaded, extra = load_config(str(path))
        assert loaded == cfg
        assert extra == {}

    def test_parse_scalars_and_lists(self):
        text = """
        # comment
        M = 16
        v = 12.5            # trailing comment
        snr_db = [0, 5, 10]
        axis = "snr"
        flag = true
        """
        out = parse_flat_config(text)
        assert out["M"] == 16
        assert out["v"] == 12.5
        assert out["snr_db"] == (0, 5, 10)
        assert out["axis"] == "snr"
        assert out["flag"] is True

    def test_extra_keys_are_returned(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("M = 16\nN = 4\nN_sg = 2\nQ_sg = 2\nG = 8\n"
                        "axis = \"snr\"\naxis_values = [0, 10]\ntrials = 2\n")
        cfg, extra = load_config(str(path))
        assert cfg.M == 16
        assert extra["axis"] == "snr"
        assert extra["axis_values"] == (0, 10)

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_flat_config("not a key value pair")


class TestCli:
    def _write_cfg(self, tmp_path, extra=""):
        path = tmp_path / "run.cfg"
        path.write_text(
            "M = 16\nN = 4\nN_r = 2\nN_u = 2\nL = 8\nK = 2\nK_C = 1\n"
            "Q = 3\nQ_s = 2\nG = 8\nN_t = 2\nN_f = 1\nN_sg = 2\nQ_sg = 2\n"
            "I_max = 0\nQ_SP = 3\nQ_DLP = 2\nsnr_db = [10.0]\n" + extra)
        return str(path)

    def test_estimate_subcommand(self, tmp_path):
        out = tmp_path / "est.csv"
        rc = main(["estimate", "--config", self._write_cfg(tmp_path),
                   "--out", str(out), "--trials", "1", "--seed", "1"])
        assert rc == 0
        body = out.read_text().splitlines()
        assert body[1].startswith("kind,axis")
        assert any(r.startswith("raw,snr,10") for r in body)

    def test_predict_subcommand(self, tmp_path):
        out = tmp_path / "pred.csv"
        rc = main(["predict", "--config", self._write_cfg(tmp_path),
                   "--out", str(out), "--trials", "1"])
        assert rc == 0
        rows = [r for r in out.read_text().splitlines() if ",sbee," in r]
        assert rows

    def test_sweep_subcommand(self, tmp_path):
        cfg = self._write_cfg(
            tmp_path, extra='axis = "n_f"\naxis_values = [1]\ntrials = 1\n')
        out = tmp_path / "sweep.csv"
        rc = main(["sweep", "--config", cfg, "--out", str(out)])
        assert rc == 0
        assert any(r.startswith("raw,n_f,1") for r in out.read_text().splitlines())

    def test_sweep_requires_axis_values(self, tmp_path):
        cfg = self._write_cfg(tmp_path, extra='axis = "n_f"\n')
        rc = main(["sweep", "--config", cfg, "--out", str(tmp_path / "x.csv")])
        assert rc == 2
