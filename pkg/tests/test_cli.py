import csv
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from rismimo import cli

CONFIG_DIR = Path(cli.__file__).parent / "configs"


def write_config(tmp_path, doc, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


def small_mi_config(**overrides):
    doc = {
        "mode": "mi_sweep",
        "seed": 3,
        "channel": {"preset": {"name": "deterministic", "K": 1, "T": 4, "R": 4,
                                "Lk": 3, "seed": 5}},
        "grids": {"gamma_db": {"values": [0.0, 10.0]}},
        "solver": {"tolerance": 1.0e-10, "damping": 1.0},
        "mc": {"trials": 8, "seed": 3},
    }
    doc.update(overrides)
    return doc


def read_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


class TestValidate:
    def test_shipped_configs_valid(self):
        for cfg in sorted(CONFIG_DIR.glob("*.yaml")):
            doc = cli.load_config(cfg)
            assert cli.validate(doc) == [], f"{cfg.name} invalid"

    def test_missing_gamma_grid(self, tmp_path):
        doc = small_mi_config()
        del doc["grids"]
        violations = cli.validate(doc)
        assert any("gamma" in v for v in violations)

    def test_unknown_mode(self):
        assert any("mode" in v for v in cli.validate({"mode": "bogus"}))

    def test_non_unitary_basis_cited(self):
        doc = {
            "mode": "mi_sweep",
            "channel": {
                "T": 2, "R": 2,
                "direct": {
                    "specular": {"kind": "zero"},
                    "profile": {"kind": "ones"},
                    "bases": {"kind": "explicit",
                              "left_re": [[1.5, 0.0], [0.0, 1.0]],
                              "right_re": [[1.0, 0.0], [0.0, 1.0]]},
                },
            },
            "grids": {"gamma_db": {"values": [0.0]}},
        }
        violations = cli.validate(doc)
        assert any("unitary" in v and "tolerance" in v for v in violations)

    def test_descending_grid_rejected(self):
        doc = small_mi_config(grids={"gamma_db": {"values": [10.0, 0.0]}})
        assert any("ascending" in v for v in cli.validate(doc))


class TestRun:
    def test_zero_gamma_linear_grid(self, tmp_path):
        doc = small_mi_config(grids={"gamma": {"values": [0.0]}}, mc={"trials": 0})
        path = write_config(tmp_path, doc)
        code = cli.main(["run", str(path), "--output-dir", str(tmp_path / "out")])
        assert code == 0
        header, rows = read_csv(tmp_path / "out" / "mi_sweep.csv")
        assert header[:2] == ["gamma_db", "mi_asymptotic_nats"]
        assert len(rows) == 1
        assert rows[0][0] == ""            # gamma = 0 has no dB value
        assert float(rows[0][1]) == 0.0

    def test_mi_sweep_outputs(self, tmp_path):
        path = write_config(tmp_path, small_mi_config())
        out = tmp_path / "out"
        code = cli.main(["run", str(path), "--output-dir", str(out)])
        assert code == 0
        header, rows = read_csv(out / "mi_sweep.csv")
        assert header == ["gamma_db", "mi_asymptotic_nats", "mi_mc_mean",
                          "mi_mc_stderr", "slope_nats_per_db"]
        assert len(rows) == 2
        # deterministic channel: MC mean equals the asymptotic value
        for row in rows:
            assert math.isclose(float(row[1]), float(row[2]), rel_tol=1e-8)
        manifest = yaml.safe_load((out / "manifest.yaml").read_text())
        assert manifest["mode"] == "mi_sweep"
        assert manifest["failures"] == []
        assert manifest["version"]

    def test_rerun_byte_identical(self, tmp_path):
        path = write_config(tmp_path, small_mi_config())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(["run", str(path), "--output-dir", str(out1)]) == 0
        assert cli.main(["run", str(path), "--output-dir", str(out2)]) == 0
        assert (out1 / "mi_sweep.csv").read_bytes() == (out2 / "mi_sweep.csv").read_bytes()

    def test_density_mode(self, tmp_path):
        doc = {
            "mode": "density",
            "channel": {"preset": {"name": "mp", "n": 8}},
            "grids": {"t": {"start": 0.2, "stop": 3.8, "points": 10}},
            "density": {"epsilon": 1.0e-3},
            "mc": {"trials": 40, "seed": 2},
        }
        out = tmp_path / "out"
        assert cli.main(["run", str(write_config(tmp_path, doc)),
                         "--output-dir", str(out)]) == 0
        header, rows = read_csv(out / "density.csv")
        assert header == ["t", "f_asymptotic", "f_empirical", "epsilon"]
        assert len(rows) == 10
        assert all(float(r[3]) == 1.0e-3 for r in rows)
        assert all(r[2] != "" for r in rows)

    def test_density_without_mc_leaves_blank(self, tmp_path):
        doc = {
            "mode": "density",
            "channel": {"preset": {"name": "mp", "n": 8}},
            "grids": {"t": {"start": 0.5, "stop": 2.0, "points": 4}},
            "density": {"epsilon": 1.0e-3},
            "mc": {"trials": 0},
        }
        out = tmp_path / "out"
        assert cli.main(["run", str(write_config(tmp_path, doc)),
                         "--output-dir", str(out)]) == 0
        _, rows = read_csv(out / "density.csv")
        assert all(r[2] == "" for r in rows)

    def test_covariance_mode(self, tmp_path):
        doc = {
            "mode": "covariance_check",
            "channel": {"preset": {"name": "fig3", "T": 4, "R": 4, "K": 2,
                                    "Lk": 4, "kappa": 1.0, "seed": 9}},
            "covariance": {"trials": 3000, "rel_tolerance": 0.2},
            "mc": {"seed": 5},
        }
        out = tmp_path / "out"
        assert cli.main(["run", str(write_config(tmp_path, doc)),
                         "--output-dir", str(out)]) == 0
        header, rows = read_csv(out / "covariance.csv")
        assert header == ["map", "link", "rel_frobenius_error"]
        # eta/eta_tilde per panel + zeta/zeta_tilde per F-link
        assert len(rows) == 2 * 2 + 2 * 3
        assert all(float(r[2]) < 0.2 for r in rows)

    def test_kappa_sweep_files(self, tmp_path):
        doc = small_mi_config(kappa_sweep=[1.0, 10.0],
                              channel={"preset": {"name": "fig3", "T": 4, "R": 4,
                                                   "K": 2, "Lk": 4, "seed": 9}},
                              mc={"trials": 0})
        out = tmp_path / "out"
        assert cli.main(["run", str(write_config(tmp_path, doc)),
                         "--output-dir", str(out)]) == 0
        assert (out / "mi_sweep_kappa1.csv").exists()
        assert (out / "mi_sweep_kappa10.csv").exists()

    def test_seed_override(self, tmp_path):
        path = write_config(tmp_path, small_mi_config())
        out = tmp_path / "out"
        assert cli.main(["run", str(path), "--output-dir", str(out),
                         "--seed-override", "99"]) == 0
        manifest = yaml.safe_load((out / "manifest.yaml").read_text())
        assert manifest["seed"] == 99


class TestExitCodes:
    def test_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("mode: [unterminated")
        assert cli.main(["run", str(bad)]) == cli.EXIT_PARSE
        assert "code=2" in capsys.readouterr().err

    def test_validation_error(self, tmp_path, capsys):
        path = write_config(tmp_path, {"mode": "nope"})
        assert cli.main(["run", str(path)]) == cli.EXIT_VALIDATION
        assert "code=3" in capsys.readouterr().err

    def test_validate_subcommand(self, tmp_path, capsys):
        good = write_config(tmp_path, small_mi_config(), "good.yaml")
        assert cli.main(["validate", str(good)]) == 0
        assert "ok" in capsys.readouterr().out
        bad = write_config(tmp_path, {"mode": "nope"}, "bad.yaml")
        assert cli.main(["validate", str(bad)]) == cli.EXIT_VALIDATION

    def test_numerical_failure_exit(self, tmp_path, capsys):
        # An impossible comparison tolerance forces the mc_compare job to fail.
        doc = {
            "mode": "mc_compare",
            "channel": {"preset": {"name": "fig3", "T": 4, "R": 4, "K": 1,
                                    "Lk": 4, "kappa": 1.0, "seed": 9}},
            "grids": {"gamma_db": {"values": [10.0]}},
            "mc": {"trials": 50, "seed": 1},
            "compare": {"rel_tolerance": 1.0e-12, "stderr_sigmas": 1.0e-6},
        }
        out = tmp_path / "out"
        code = cli.main(["run", str(write_config(tmp_path, doc)),
                         "--output-dir", str(out)])
        assert code == cli.EXIT_NUMERICAL
        assert "code=4" in capsys.readouterr().err
        header, rows = read_csv(out / "mi_compare.csv")
        assert header[-2:] == ["rel_error", "within_tol"]
        assert rows[0][-1] == "0"


class TestExplicitChannelSchema:
    def test_explicit_channel_roundtrip(self, tmp_path):
        doc = {
            "mode": "mi_sweep",
            "channel": {
                "T": 4, "R": 4, "stats_seed": 3, "normalize_power": True,
                "tx_shape": [2, 2], "rx_shape": [2, 2],
                "direct": {"kappa": 1.0,
                           "specular": {"kind": "upa", "departure": [0.4, 0.9],
                                         "arrival": [1.2, 0.5]},
                           "profile": {"kind": "random"},
                           "bases": {"kind": "random"}},
                "panels": [
                    {"L": 4, "shape": [2, 2], "rho": 0.8,
                     "F": {"kappa": 2.0,
                           "specular": {"kind": "upa_random",
                                         "departure_center": [0.4, 0.9],
                                         "departure_span": 0.157,
                                         "arrival_center": [1.0, 0.8],
                                         "arrival_span": 0.314},
                           "profile": {"kind": "random"},
                           "bases": {"kind": "random"}},
                     "G": {"kappa": 2.0, "specular": {"kind": "gaussian"},
                           "profile": {"kind": "random"},
                           "bases": {"kind": "random"},
                           "phases": {"kind": "random"}}},
                ],
            },
            "grids": {"gamma_db": {"values": [5.0]}},
            "mc": {"trials": 0},
        }
        errors = []
        spec = cli.build_channel(doc["channel"], errors)
        assert errors == []
        assert spec.K == 1 and spec.T == 4 and spec.L == 8
        out = tmp_path / "out"
        assert cli.main(["run", str(write_config(tmp_path, doc)),
                         "--output-dir", str(out)]) == 0

    def test_explicit_profile_and_matrix(self):
        doc = {
            "T": 2, "R": 2,
            "direct": {"kappa": 1.0,
                       "specular": {"kind": "explicit", "re": [[1, 0], [0, 1]]},
                       "profile": {"kind": "explicit", "values": [[1, 1], [1, 1]]},
                       "bases": {"kind": "identity"}},
        }
        errors = []
        spec = cli.build_channel(doc, errors)
        assert errors == [] and spec is not None
        # kappa=1 with normalization: specular and scattering powers match
        lf = spec.links_F[0]
        assert math.isclose(np.linalg.norm(lf.Fbar) ** 2,
                            (lf.M ** 2).sum() / 2, rel_tol=1e-12)

    def test_shape_mismatch_reported(self):
        doc = {
            "T": 2, "R": 2,
            "direct": {"specular": {"kind": "explicit", "re": [[1, 0, 0], [0, 1, 0]]},
                       "profile": {"kind": "ones"}, "bases": {"kind": "identity"}},
        }
        errors = []
        assert cli.build_channel(doc, errors) is None
        assert any("shape" in e for e in errors)
