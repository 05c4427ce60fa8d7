import json
import shutil
import subprocess

import numpy as np
import pytest

from geoembed import shapes
from geoembed.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, parse_config, run_cli
from geoembed.geodesic import read_distance_field
from geoembed.mesh import load_mesh, save_off
from geoembed.persistence import load_precomputation, read_header
from geoembed.query import query_distance


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_off(d / "t.off", *shapes.torus(16, 12, noise=0.3))
    save_off(d / "other.off", *shapes.torus(16, 12, noise=0.3, seed=5))
    code = run_cli(["precompute", "--mesh", str(d / "t.off"), "--out", str(d / "t.gepc"),
                    "--rounds", "2", "--json-dump", str(d / "t.json")])
    assert code == EXIT_OK
    return d


def run(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestCommands:
    def test_precompute_outputs(self, work):
        h, meta = read_header(work / "t.gepc")
        assert (h.n, h.m, h.l, h.K, h.K_S) == (192, 8, 2, 60, 20)
        assert meta["user"] == {"seed": 0}
        assert json.loads((work / "t.json").read_text())["l"] == 2

    def test_precompute_is_reproducible(self, work, capsys):
        code, out, _ = run(capsys, "precompute", "--mesh", work / "t.off", "--out",
                           work / "again.gepc", "--rounds", "2")
        assert code == EXIT_OK and out.startswith("saddles ")
        assert (work / "again.gepc").read_bytes() == (work / "t.gepc").read_bytes()

    def test_info(self, work, capsys):
        code, out, _ = run(capsys, "info", "--pre", work / "t.gepc")
        assert code == EXIT_OK
        lines = dict(line.split(" ", 1) for line in out.splitlines())
        assert lines["n"] == "192" and lines["l"] == "2"
        assert "reset_rounds" in lines

    def test_query(self, work, capsys):
        ctx = load_precomputation(work / "t.gepc", load_mesh(work / "t.off"))
        code, out, _ = run(capsys, "query", "--mesh", work / "t.off", "--pre", work / "t.gepc",
                           "--src", 3, "--dst", 150)
        assert code == EXIT_OK
        assert float(out) == query_distance(ctx, 3, 150)
        _, out, _ = run(capsys, "query", "--mesh", work / "t.off", "--pre", work / "t.gepc",
                        "--src", 7, "--dst", 7)
        assert float(out) == 0.0

    def test_ssad(self, work, capsys):
        ctx = load_precomputation(work / "t.gepc", load_mesh(work / "t.off"))
        code, _, _ = run(capsys, "ssad", "--mesh", work / "t.off", "--pre", work / "t.gepc",
                         "--src", 11, "--out", work / "d.txt")
        assert code == EXIT_OK
        field = read_distance_field(work / "d.txt")
        assert len(field) == 192
        np.testing.assert_array_equal(field, [query_distance(ctx, 11, v) for v in range(192)])

    def test_eval(self, work, capsys):
        code, out, _ = run(capsys, "eval", "--mesh", work / "t.off", "--pre", work / "t.gepc",
                           "--pairs", 100, "--out", work / "e.json", "--csv", work / "e.csv")
        assert code == EXIT_OK
        doc = json.loads((work / "e.json").read_text())
        assert {"mean_relative_error", "histogram", "timing", "case_mix"} <= doc.keys()
        assert doc["n_pairs"] == 100
        assert out.startswith("mean_relative_error ")
        assert len((work / "e.csv").read_text().splitlines()) == 101

    def test_console_script(self, work):
        exe = shutil.which("geoembed")
        if exe is None:
            pytest.skip("console script not installed")
        res = subprocess.run([exe, "info", "--pre", str(work / "t.gepc")],
                             capture_output=True, text=True)
        assert res.returncode == 0 and "n 192" in res.stdout


class TestExitCodes:
    def test_help(self, capsys):
        assert run(capsys, "--help")[0] == EXIT_OK

    @pytest.mark.parametrize("argv", [
        [],
        ["bogus"],
        ["query", "--pre", "x"],
        ["precompute", "--mesh", "a", "--out", "b", "--k", "5", "--ks", "6"],
        ["precompute", "--mesh", "a", "--out", "b", "--dim", "0"],
        ["query", "--mesh", "a", "--pre", "b", "--src", "x", "--dst", "1"],
    ])
    def test_usage_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == EXIT_USAGE and err

    def test_bad_thread_env(self, monkeypatch):
        monkeypatch.setenv("GE_THREADS", "zero")
        assert run_cli(["info", "--pre", "x"]) == EXIT_USAGE

    def test_thread_env_fallback(self, monkeypatch):
        monkeypatch.setenv("GE_THREADS", "3")
        cfg = parse_config(["eval", "--mesh", "a", "--pre", "b", "--out", "c"])
        assert cfg.threads == 3
        cfg = parse_config(["eval", "--mesh", "a", "--pre", "b", "--out", "c", "--threads", "2"])
        assert cfg.threads == 2
        monkeypatch.delenv("GE_THREADS")
        assert parse_config(["eval", "--mesh", "a", "--pre", "b", "--out", "c"]).threads == 1

    def test_wrong_mesh(self, work, capsys):
        code, _, err = run(capsys, "query", "--mesh", work / "other.off", "--pre", work / "t.gepc",
                           "--src", 0, "--dst", 1)
        assert code == EXIT_DATA and "ChecksumMismatch" in err

    def test_bad_index(self, work, capsys):
        code, _, err = run(capsys, "query", "--mesh", work / "t.off", "--pre", work / "t.gepc",
                           "--src", 0, "--dst", 192)
        assert code == EXIT_DATA and err

    def test_unreadable_mesh(self, work, capsys):
        (work / "bad.off").write_text("OFF\n3 1 0\n0 0 0\n")
        code, _, _ = run(capsys, "query", "--mesh", work / "bad.off", "--pre", work / "t.gepc",
                         "--src", 0, "--dst", 1)
        assert code == EXIT_DATA

    def test_damaged_file(self, work, capsys):
        data = bytearray((work / "t.gepc").read_bytes())
        data[100] ^= 1
        (work / "bad.gepc").write_bytes(bytes(data))
        code, _, err = run(capsys, "query", "--mesh", work / "t.off", "--pre", work / "bad.gepc",
                           "--src", 0, "--dst", 1)
        assert code == EXIT_DATA and "Corrupt" in err

    def test_missing_file(self, work, capsys):
        assert run(capsys, "info", "--pre", work / "nope.gepc")[0] == EXIT_DATA
