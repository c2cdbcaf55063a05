import csv
import json
import math

import pytest

from nonexpansive import __version__
from nonexpansive.cli import (CSV_COLUMNS, ConfigError, EXIT_BUDGET, EXIT_CALKA, EXIT_CONFIG,
                              EXIT_NO_ANCHOR, EXIT_OK, main, parse_config)


def write_config(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, command, cfg, *extra, out="out"):
    path = write_config(tmp_path, cfg, f"{command}.json")
    return main([command, "--config", path, "--out", str(tmp_path / out), "--jobs", "1", *extra])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SCALE = {"space": {"name": "euclidean", "dim": 1}, "map": {"name": "scale", "params": {"c": 0.5}},
         "starts": [[1.0], [-2.0]], "horizon": 2000}
TRANSLATION = {"space": {"name": "integer-lattice", "dim": 1},
               "map": {"name": "translation", "params": {"v": [1]}},
               "starts": [[0.0]], "horizon": 2000, "radii": [1.0, 10.0, 100.0]}
FIFTH = {"space": {"name": "circle"}, "map": {"name": "rotation", "params": {"theta": 2 * math.pi / 5}},
         "starts": [[1.0, 0.0]], "horizon": 2000}


class TestAnalyze:
    def test_scale_row(self, tmp_path):
        assert run(tmp_path, "analyze", SCALE) == EXIT_OK
        rows = read_rows(tmp_path / "out" / "summary.csv")
        assert rows[0]["start_index"] == "0"
        assert rows[0]["verdict"] == "RelativelyCompact"
        assert [r["verdict"] for r in rows] == ["RelativelyCompact"] * 2

    def test_translation_row(self, tmp_path):
        assert run(tmp_path, "analyze", TRANSLATION) == EXIT_OK
        rows = read_rows(tmp_path / "out" / "summary.csv")
        assert rows[0]["verdict"] == "CompactlyDivergent"
        assert rows[0]["recurrent"] == "false"

    def test_csv_schema_and_line_endings(self, tmp_path):
        run(tmp_path, "analyze", SCALE)
        raw = (tmp_path / "out" / "summary.csv").read_bytes()
        assert b"\r" not in raw
        assert raw.split(b"\n")[0].decode() == ",".join(CSV_COLUMNS)

    def test_one_json_per_start(self, tmp_path):
        run(tmp_path, "analyze", SCALE)
        names = sorted(p.name for p in (tmp_path / "out").glob("start_*.json"))
        assert names == ["start_0000.json", "start_0001.json"]

    def test_reports_carry_hash_and_version(self, tmp_path):
        run(tmp_path, "analyze", SCALE)
        body = json.loads((tmp_path / "out" / "start_0000.json").read_text())
        assert body["version"] == __version__
        assert len(body["config_hash"]) == 64
        assert body["command"] == "analyze"

    def test_jobs_do_not_change_reports(self, tmp_path):
        cfg = dict(SCALE, starts=[[1.0], [-2.0], [0.5], [3.0]])
        path = write_config(tmp_path, cfg)
        assert main(["analyze", "--config", path, "--out", str(tmp_path / "a"), "--jobs", "1"]) == 0
        assert main(["analyze", "--config", path, "--out", str(tmp_path / "b"), "--jobs", "3"]) == 0
        for name in ("summary.csv", "start_0003.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_horizon_flag_overrides(self, tmp_path):
        run(tmp_path, "analyze", SCALE, "--horizon", "100")
        body = json.loads((tmp_path / "out" / "start_0000.json").read_text())
        assert body["report"]["evidence"]["net_size"] >= 1

    def test_budget_exit(self, tmp_path):
        assert run(tmp_path, "analyze", SCALE, "--horizon", "2000000") == EXIT_BUDGET


class TestConfigErrors:
    @pytest.mark.parametrize("patch, field", [
        ({"horizon": 0}, "horizon"),
        ({"horizon": "ten"}, "horizon"),
        ({"tolerances": {"eps": -1}}, "tolerances.eps"),
        ({"tolerances": {"epsilon": 1}}, "tolerances.epsilon"),
        ({"starts": [[1.0], ["x"]]}, "starts[1]"),
        ({"starts": []}, "starts"),
        ({"outputs": {"formats": ["xml"]}}, "outputs.formats"),
        ({"radii": [1.0, 0.0]}, "radii[1]"),
        ({"colour": "red"}, "config.colour"),
    ])
    def test_field_path_in_message(self, tmp_path, capsys, patch, field):
        assert run(tmp_path, "analyze", dict(SCALE, **patch)) == EXIT_CONFIG
        assert field in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text('{"horizon": 10,')
        assert main(["analyze", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "line" in capsys.readouterr().err

    def test_missing_space_for_orbit_command(self):
        cfg = {k: v for k, v in SCALE.items() if k != "space"}
        with pytest.raises(ConfigError) as e:
            parse_config(cfg, "retract")
        assert e.value.path == "space"

    def test_defaults(self):
        cfg = parse_config(SCALE, "analyze")
        assert cfg.tolerances.eps == cfg.tolerances.eps_recur == 1e-3
        assert cfg.tolerances.eps_group == 5e-3
        assert sorted(cfg.outputs.formats) == ["csv", "json"]

    def test_hash_ignores_output_dir(self):
        a = parse_config(dict(SCALE, outputs={"dir": "x"}), "analyze")
        b = parse_config(dict(SCALE, outputs={"dir": "y"}), "analyze")
        c = parse_config(dict(SCALE, seed=3), "analyze")
        assert a.digest() == b.digest() != c.digest()


class TestCalka:
    def test_golden_orbit_verified(self, tmp_path):
        cfg = {"space": {"name": "circle"}, "map": {"name": "rotation"}, "starts": [[1.0, 0.0]],
               "horizon": 3000, "calka": {"rho": [0.5]}}
        assert run(tmp_path, "calka", cfg) == EXIT_OK
        rep = json.loads((tmp_path / "out" / "calka.json").read_text())["report"]
        entry = rep["reports"][0]
        assert entry["N"] is not None and entry["M"] > entry["N"]
        assert entry["conclusion_verified_to"] == 3000

    def test_periodic_orbit_not_injective(self, tmp_path, capsys):
        assert run(tmp_path, "calka", FIFTH) == EXIT_CALKA
        assert "calka precondition" in capsys.readouterr().err

    def test_contraction_has_wrong_monotonicity(self, tmp_path, capsys):
        assert run(tmp_path, "calka", dict(SCALE, starts=[[1.0]], horizon=20)) == EXIT_CALKA
        capsys.readouterr()

    def test_csv_table(self, tmp_path):
        # shift-invariant capped metric d(n, m) = min(|n - m|, 0.9)
        lines = ["n,m,d"]
        for n in range(40):
            for m in range(n + 1, 40):
                lines.append(f"{n},{m},{min(m - n, 0.9)}")
        table = tmp_path / "t.csv"
        table.write_text("\n".join(lines) + "\n")
        cfg = {"calka": {"table": str(table), "rho": [2.0], "min_ball_count": 1}}
        assert run(tmp_path, "calka", cfg) == EXIT_OK
        entry = json.loads((tmp_path / "out" / "calka.json").read_text())["report"]["reports"][0]
        assert (entry["N"], entry["M"]) == (0, 1)


class TestRetract:
    def test_scale(self, tmp_path):
        cfg = dict(SCALE, starts=[[1.0], [-2.0], [0.0]])
        assert run(tmp_path, "retract", cfg) == EXIT_OK
        rep = json.loads((tmp_path / "out" / "retract.json").read_text())["report"]
        assert rep["anchors"] == [[0.0]]
        assert rep["residual"] <= 1e-6
        assert rep["criterion_agreement"] is True

    def test_fifth_rotation(self, tmp_path):
        assert run(tmp_path, "retract", FIFTH) == EXIT_OK
        rep = json.loads((tmp_path / "out" / "retract.json").read_text())["report"]
        assert rep["return_sequence"][:3] == [5, 10, 15]
        assert rep["group_defects"]["net_size"] == 5
        assert all(a["hausdorff"] <= 1e-9 for a in rep["accumulation"])

    def test_hyperbolic_has_no_anchor(self, tmp_path, capsys):
        cfg = {"space": {"name": "poincare-disk"}, "map": {"name": "mobius-hyperbolic",
                                                            "params": {"a": 0.5}},
               "starts": [[0.0, 0.0]], "horizon": 2000}
        assert run(tmp_path, "retract", cfg) == EXIT_NO_ANCHOR
        capsys.readouterr()


class TestOtherCommands:
    def test_semigroup_enumeration(self, tmp_path):
        assert run(tmp_path, "semigroup", {"semigroup": {"enumerate": 3}}) == EXIT_OK
        rep = json.loads((tmp_path / "out" / "semigroup.json").read_text())["report"]
        assert [c["semigroups"] for c in rep["enumeration"]] == [1, 8, 113]
        assert [c["groups"] for c in rep["enumeration"]] == [1, 2, 3]

    def test_semigroup_needs_input(self, tmp_path, capsys):
        assert run(tmp_path, "semigroup", {}) == EXIT_CONFIG
        assert "semigroup" in capsys.readouterr().err

    def test_kobayashi_pairs(self, tmp_path):
        cfg = {"kobayashi": {"pairs": [[[0.0, 0.0], [0.5, 0.0]]]},
               "map": {"name": "blaschke", "params": {"zeros": [[0.3, 0.1]]}}}
        assert run(tmp_path, "kobayashi", cfg) == EXIT_OK
        rep = json.loads((tmp_path / "out" / "kobayashi.json").read_text())["report"]
        assert abs(rep["pairs"][0]["upper_bound"] - 0.5 * math.log(3)) < 1e-12
        assert rep["schwarz_pick"]["passed"]


class TestDeterminism:
    @pytest.mark.parametrize("command, cfg", [
        ("analyze", SCALE), ("retract", FIFTH),
        ("kobayashi", {"space": {"name": "polydisc", "dim": 2},
                       "kobayashi": {"pairs": [[[0.1, 0.2, -0.3, 0.0], [0.4, -0.1, 0.2, 0.5]]]}}),
    ])
    def test_byte_identical(self, tmp_path, command, cfg):
        assert run(tmp_path, command, cfg, out="a") == EXIT_OK
        assert run(tmp_path, command, cfg, out="b") == EXIT_OK
        a = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "metadata.json")
        b = sorted(p.name for p in (tmp_path / "b").iterdir() if p.name != "metadata.json")
        assert a == b and a
        for name in a:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
        assert "elapsed_s" in meta and meta["exit_code"] == 0
