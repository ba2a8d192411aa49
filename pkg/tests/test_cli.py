import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from triwell import cli
from triwell.cli import (
    EXIT_CONFIG,
    EXIT_FAILURE,
    EXIT_OK,
    ConfigError,
    RunConfig,
    default_config,
    main,
    parse_config,
    render_config,
    write_outputs,
)

POLY = "model=poly\na=1.5\nb=0.6\ninv_hbar_min=5\ninv_hbar_max=12\npoints=200"
SQUARE = "model=square\na=0.55\nb=1.25\nc=1.75\nv_max=1.0\nv_min=-1.82"


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestParseConfig:
    def test_polynomial_example(self):
        cfg = parse_config(POLY)
        assert (cfg.model, cfg.a, cfg.b) == ("poly", 1.5, 0.6)
        assert (cfg.inv_hbar_min, cfg.inv_hbar_max, cfg.points) == (5.0, 12.0, 200)

    def test_square_example(self):
        cfg = parse_config(SQUARE)
        assert (cfg.a, cfg.b, cfg.c, cfg.v_max, cfg.v_min) == (0.55, 1.25, 1.75, 1.0, -1.82)
        assert cfg.square().c == 1.75

    def test_inverted_wells_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("model=poly\na=0.5\nb=0.9")

    def test_comments_blank_lines_and_scientific_notation(self):
        cfg = parse_config("# run\n\nmodel = poly  # inline\na = 1.5\nb = 6e-1\ntrunc_tol = 1E-10\n")
        assert cfg.b == 0.6 and cfg.trunc_tol == 1e-10

    def test_tuples(self):
        cfg = parse_config(POLY + "\nhusimi_inv_hbar = 8.1, 8.2\nhusimi_levels = 3,4, 5")
        assert cfg.husimi_inv_hbar == (8.1, 8.2) and cfg.husimi_levels == (3, 4, 5)

    @pytest.mark.parametrize(
        "text,line,column",
        [
            ("model=poly\na=1.5\nb=0.6\nfoo=1", 4, 1),
            ("model=poly\na=1.5\nb=0.6\n  a=1.4", 4, 3),
            ("model=poly\na=1.5\nb=zero", 3, 3),
            ("model=poly\na=1.5\nb=0.6\npoints = 2.5", 4, 10),
            ("model=poly\njust words", 2, 1),
            ("model=poly\na=1.5\nb=0.6\nhusimi_levels = 1, x", 4, 20),
        ],
    )
    def test_errors_carry_position(self, text, line, column):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert (info.value.line, info.value.column) == (line, column)
        assert f"line {line}, column {column}" in str(info.value)

    def test_unknown_and_duplicate_keys(self):
        with pytest.raises(ConfigError, match="unknown key 'hbar'"):
            parse_config(POLY + "\nhbar=0.1")
        with pytest.raises(ConfigError, match="duplicate key 'points'"):
            parse_config(POLY + "\npoints=10")

    @pytest.mark.parametrize(
        "text,missing",
        [("a=1.5\nb=0.6", "model"), ("model=poly\na=1.5", "b"), ("model=square\na=0.55\nb=1.25\nc=1.75", "v_max")],
    )
    def test_missing_required_keys(self, text, missing):
        with pytest.raises(ConfigError, match=missing):
            parse_config(text)

    @pytest.mark.parametrize(
        "extra",
        ["inv_hbar_min=13", "inv_hbar_min=-1", "trunc_tol=0", "points=0", "convention=xy", "dps=-1", "n_q=1"],
    )
    def test_invariants(self, extra):
        with pytest.raises(ConfigError):
            parse_config(POLY.replace("inv_hbar_min=5", "") + "\n" + extra)

    def test_model_defaults(self):
        cfg = parse_config(SQUARE)
        assert (cfg.inv_hbar_min, cfg.inv_hbar_max) == (6.0, 16.0)
        assert parse_config("model=threelevel").inv_hbar_min == 8.0


configs = st.builds(
    lambda a, ratio, lo, width, pts, tol, levels: RunConfig(
        model="poly", a=a, b=a * ratio, inv_hbar_min=lo, inv_hbar_max=lo + width,
        points=pts, trunc_tol=tol, husimi_levels=levels,
    ),
    st.floats(0.3, 3.0),
    st.floats(0.05, 0.95),
    st.floats(0.1, 20.0),
    st.floats(1e-3, 10.0),
    st.integers(1, 5000),
    st.floats(1e-15, 1e-3),
    st.lists(st.integers(0, 40), min_size=1, max_size=4).map(tuple),
)


@given(configs)
def test_render_round_trip(cfg):
    assert parse_config(render_config(cfg)) == cfg


def test_render_round_trip_defaults():
    for model in ("poly", "square", "threelevel"):
        cfg = default_config(model)
        assert parse_config(render_config(cfg)) == cfg


class TestWriteOutputs:
    def test_csv_format(self, tmp_path):
        path = write_outputs([dict(x=0.1, flag=True, n=3, s="peak")], "csv", tmp_path / "t.csv")
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw == b"x,flag,n,s\n0.10000000000000001,1,3,peak\n"

    def test_seventeen_digits_round_trip(self, tmp_path):
        values = np.random.default_rng(5).normal(size=50) * 10.0 ** np.arange(-25, 25)
        path = write_outputs([dict(v=v) for v in values], "csv", tmp_path / "v.csv")
        back = [float(r["v"]) for r in read_csv(path)]
        assert back == values.tolist()

    def test_columns_must_match(self, tmp_path):
        with pytest.raises(ValueError):
            write_outputs([dict(a=1), dict(b=2)], "csv", tmp_path / "bad.csv")

    def test_json(self, tmp_path):
        path = write_outputs([dict(a=np.float64(1.5), b=np.arange(2))], "json", tmp_path / "x.json")
        assert json.loads(path.read_text()) == {"a": 1.5, "b": [0, 1]}

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            write_outputs([dict(a=1)], "xml", tmp_path / "x.xml")

    def test_io_error_names_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            write_outputs([dict(a=1)], "csv", blocker / "sub" / "out.csv")


class TestMain:
    def test_help_lists_defaults(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        for needle in ("trunc_tol = 1e-09", "points = 200", "--refine-resonances", "exit codes"):
            assert needle in text

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "model=poly\na=0.5\nb=0.9")
        assert main(["poly-spectrum", "--config", str(cfg), "--output", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_model_mismatch_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, SQUARE)
        assert main(["poly-splitting", "--config", str(cfg), "--output", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["three-level", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG

    def test_failure_removes_partial_outputs(self, tmp_path, monkeypatch):
        def runner(cfg, out, args):
            out.csv("partial.csv", [dict(a=1.0)])
            raise RuntimeError("boom")

        monkeypatch.setitem(cli.RUNNERS, "three-level", runner)
        out = tmp_path / "o"
        assert main(["three-level", "--output", str(out)]) == EXIT_FAILURE
        assert list(out.iterdir()) == []

    def test_subcommand_flag_equivalent(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["three-level", "--output", str(a)]) == EXIT_OK
        assert main(["--subcommand", "three-level", "--output", str(b)]) == EXIT_OK
        assert (a / "three_level.csv").read_bytes() == (b / "three_level.csv").read_bytes()

    def test_verify_passes(self, tmp_path, capsys):
        assert main(["verify", "--output", str(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("PASS") >= 7


class TestSubcommands:
    def test_poly_splitting_schema_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path, "model=poly\na=1.5\nb=0.6\ninv_hbar_min=8.0\ninv_hbar_max=8.4\npoints=9")
        for name in ("r1", "r2"):
            assert main(["poly-splitting", "--config", str(cfg), "--output", str(tmp_path / name), "--threads", "2"]) == 0
        first = (tmp_path / "r1" / "poly_splitting.csv").read_bytes()
        assert first == (tmp_path / "r2" / "poly_splitting.csv").read_bytes()
        assert first.split(b"\n")[0] == b"inv_hbar,e_plus,e_minus,delta_e,resonance_flag"
        rows = read_csv(tmp_path / "r1" / "poly_splitting.csv")
        assert len(rows) == 9 and all(float(r["delta_e"]) > 0 for r in rows)
        side = json.loads((tmp_path / "r1" / "poly_splitting.json").read_text())
        assert side["tool"] == "triwell" and side["subcommand"] == "poly-splitting"
        assert side["config"]["a"] == 1.5 and "created" in side and "version" in side
        res = json.loads((tmp_path / "r1" / "poly_resonances.json").read_text())
        assert set(res) == {"spikes", "avoided_crossings"}

    def test_refinement_adds_points(self, tmp_path):
        cfg = write_config(tmp_path, "model=poly\na=1.5\nb=0.6\ninv_hbar_min=7.0\ninv_hbar_max=9.4\npoints=49")
        assert main(["poly-splitting", "--config", str(cfg), "--output", str(tmp_path / "r"), "--refine-resonances"]) == 0
        rows = read_csv(tmp_path / "r" / "poly_splitting.csv")
        xs = [float(r["inv_hbar"]) for r in rows]
        assert len(rows) > 49 and xs == sorted(xs)
        assert any(r["resonance_flag"] == "1" for r in rows)

    def test_husimi_schema(self, tmp_path):
        cfg = write_config(
            tmp_path, "model=poly\na=1.5\nb=0.6\nhusimi_inv_hbar=8.184\nhusimi_levels=5, 7\nn_q=21\nn_p=11\n"
        )
        assert main(["husimi", "--config", str(cfg), "--output", str(tmp_path / "h")]) == 0
        for level in (5, 7):
            path = tmp_path / "h" / f"husimi_x8.184_n{level}.csv"
            rows = read_csv(path)
            assert list(rows[0]) == ["q", "p", "value"] and len(rows) == 21 * 11
            meta = json.loads(path.with_suffix(".json").read_text())["metadata"]
            assert meta["level"] == level and meta["parity"] == -1
        assert (tmp_path / "h" / "plot_husimi_x8.184_n5.py").exists()

    def test_square_semiclassical_peak_matches_exact_maximum(self, tmp_path):
        cfg = write_config(tmp_path, SQUARE + "\ninv_hbar_min=8.5\ninv_hbar_max=9.5\npoints=21\n")
        assert main(["square-semiclassical", "--config", str(cfg), "--output", str(tmp_path / "s")]) == 0
        assert main(["square-exact", "--config", str(cfg), "--output", str(tmp_path / "e"), "--refine-resonances"]) == 0
        sc = read_csv(tmp_path / "s" / "square_semiclassical.csv")
        assert list(sc[0]) == ["inv_hbar", "e_n", "delta_e_eq37", "peak_bound", "used_formula"]
        (peak,) = read_csv(tmp_path / "s" / "square_peaks.csv")
        assert float(peak["inv_hbar_star"]) == pytest.approx(9.093, abs=1e-3)
        exact = read_csv(tmp_path / "e" / "square_exact.csv")
        top = max(exact, key=lambda r: float(r["delta_e"]))
        assert float(top["inv_hbar"]) == pytest.approx(9.093, abs=1e-3)
        assert float(peak["peak_height"]) == pytest.approx(float(top["delta_e"]), rel=0.25)

    def test_three_level_fork(self, tmp_path):
        assert main(["three-level", "--output", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "three_level.csv")
        x = np.array([float(r["inv_hbar"]) for r in rows])
        s = np.array([float(r["doublet_splitting"]) for r in rows])
        side = json.loads((tmp_path / "three_level.json").read_text())
        crossing = side["metadata"]["crossing_inv_hbar"]
        assert abs(x[np.argmax(s)] - crossing) < x[1] - x[0]
        # the middle level stays put while the outer two repel
        gaps = np.array([float(r["e3"]) - float(r["e1"]) for r in rows])
        assert gaps.min() == pytest.approx(gaps[np.argmax(s)], rel=1e-12)
        assert {r["regime"] for r in rows} == {"before", "resonant", "after"}


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "triwell", "three-level", "--output", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert (tmp_path / "three_level.csv").exists()
