"""Command-line driver: exit codes, report determinism, the flow/verify
round trip, and config validation."""

import json

import numpy as np
import pytest

from parastrat.cli import main
from conftest import cnum, cmat, flow_config


def run(args):
    return main(args)


def strip_header(text):
    return "\n".join(text.splitlines()[1:])


class TestConfigValidation:
    def test_bad_json_exits_2(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json", encoding="utf-8")
        assert run(["check", "--config", str(p), "--out", str(tmp_path)]) == 2
        assert "line" in capsys.readouterr().err

    def test_coincident_points_rejected(self, tmp_path, write_config):
        cfg = flow_config(0, [0.0, 1.0], [1.0, -1.0], [[1.0, -1.0]] * 2, 4)
        cfg["points"][1]["xi"] = cfg["points"][0]["xi"]
        assert run(["check", "--config", write_config(cfg), "--out", str(tmp_path)]) == 2

    def test_coprimality_rejected(self, tmp_path, write_config):
        cfg = flow_config(0, [0.0, 1.0], [1.0, -1.0], [[1.0, -1.0]] * 2, 4)
        cfg["points"][0]["r"] = 2
        assert run(["check", "--config", write_config(cfg), "--out", str(tmp_path)]) == 2

    def test_unknown_command_exits_2(self, tmp_path):
        assert run(["frobnicate", "--config", "x"]) == 2


class TestReduce:
    def test_rank_one_coefficients(self, tmp_path, write_config):
        a, b = 1.25, -0.5
        cfg = {
            "version": 1, "n": 1, "nu": "dz", "seed": 0,
            "points": [{"xi": [0.0, 0.0], "e": 1, "r": 1,
                        "framing": [[[1.0, 0.0]]],
                        "alpha_principal_part": {"-2": [[[a, 0.0]]],
                                                 "-1": [[[b, 0.0]]]}}],
        }
        code = run(["reduce", "--config", write_config(cfg), "--out", str(tmp_path)])
        assert code == 0
        text = (tmp_path / "report.txt").read_text()
        assert f"gamma_-1: [{a!r}, " in text.replace("1.25,", "1.25, ")
        assert "1.25" in text and "-0.5" in text

    def test_formal_type_input_round_trips(self, tmp_path, write_config):
        cfg = {
            "version": 1, "n": 2, "seed": 0,
            "points": [{"xi": [0.0, 0.0], "e": 2, "r": 1,
                        "formal_type": {"coeffs": [[[1.5, -0.25]], [[0.125, 0.0]]],
                                        "normalized": True}}],
        }
        code = run(["reduce", "--config", write_config(cfg), "--out", str(tmp_path)])
        assert code == 0
        text = (tmp_path / "report.txt").read_text()
        assert "t_-1: [1.5, -0.25]" in text
        assert "t_0: [0.125," in text


class TestCheck:
    def test_balanced_passes(self, tmp_path, write_config):
        cfg = flow_config(1, [0.0, 1.0], [1.0, -1.0 + 0.5j], [[1.0, -1.0 + 0.5j]] * 2, 4)
        assert run(["check", "--config", write_config(cfg), "--out", str(tmp_path)]) == 0
        assert "RESULT: PASS" in (tmp_path / "report.txt").read_text()

    def test_unbalanced_fails_with_exit_1(self, tmp_path, write_config):
        cfg = flow_config(1, [0.0, 1.0], [1.0, -1.0], [[1.0, -1.0]] * 2, 4)
        mat = np.array([[v[0] + 1j * v[1] for v in row]
                        for row in cfg["points"][0]["alpha_principal_part"]["-1"]])
        cfg["points"][0]["alpha_principal_part"]["-1"] = cmat(mat + np.eye(2))
        code = run(["check", "--config", write_config(cfg), "--out", str(tmp_path)])
        assert code == 1
        text = (tmp_path / "report.txt").read_text()
        assert "moment_map_nonzero" in text and "RESULT: FAIL" in text


class TestFlowVerify:
    def test_flow_verify_round_trip_and_determinism(self, tmp_path, write_config):
        a0 = np.array([1.0, 1.0 + 1j, 2.0])
        v = 0.4 * np.ones(3) / np.sqrt(3)
        cfg = flow_config(2, [0.0, 1.0, 3.0], a0, [a0, a0 + v], 40)
        path = write_config(cfg)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        out1.mkdir(), out2.mkdir()
        assert run(["flow", "--config", path, "--out", str(out1)]) == 0
        assert run(["flow", "--config", path, "--out", str(out2)]) == 0
        csv1 = (out1 / "trajectory.csv").read_bytes()
        assert csv1 == (out2 / "trajectory.csv").read_bytes()
        rep1 = strip_header((out1 / "report.txt").read_text())
        assert rep1 == strip_header((out2 / "report.txt").read_text())
        assert run(["verify", "--config", path, "--out", str(out1)]) == 0
        text = (out1 / "report.txt").read_text()
        assert "residuals reproduced" in text and "RESULT: PASS" in text

    def test_flow_residuals_recorded(self, tmp_path, write_config):
        a0 = np.array([1.0, -1.0])
        cfg = flow_config(3, [0.0, 2.0], a0, [a0, a0 + np.array([0.3, -0.2])], 64)
        path = write_config(cfg)
        assert run(["flow", "--config", path, "--out", str(tmp_path)]) == 0
        header, *rows = (tmp_path / "trajectory.csv").read_text().splitlines()
        cols = header.split(",")
        assert cols[0] == "s" and cols[-3:] == ["res_framing", "res_curvature",
                                                "res_two_form"]
        assert len(rows) == 65
        for row in rows:
            vals = [float(x) for x in row.split(",")]
            assert max(vals[-3:]) < 1e-6


class TestRank:
    def test_rank_command(self, tmp_path, write_config):
        cfg = flow_config(4, [0.0, 1.0], [1.0, 0.5 - 1.0j], [[1.0, 0.5 - 1.0j]] * 2, 4,
                          extra={"rank": {"random_states": 2}})
        assert run(["rank", "--config", write_config(cfg), "--out", str(tmp_path)]) == 0
        text = (tmp_path / "report.txt").read_text()
        assert "observed generator rank: 8" in text
        assert "expected generator rank: 8" in text
        assert "rank stable across 2 random regular states" in text
