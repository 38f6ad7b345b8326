import json
import math

import pytest

from renoise import cli


def run(argv, out):
    return cli.main(argv + ["--out", str(out)])


class TestParseGrid:
    def test_colon_grid(self):
        assert cli.parse_grid("0.5:2:0.5") == (0.5, 1.0, 1.5, 2.0)

    def test_comma_list(self):
        assert cli.parse_grid("1,2,4") == (1.0, 2.0, 4.0)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            cli.parse_grid("1:2:3:4")
        with pytest.raises(ValueError):
            cli.parse_grid("4:1:0.5")


class TestFixedPointCommand:
    def test_check_passes(self, tmp_path):
        out = tmp_path / "run"
        assert run(["fixed-point", "--check"], out) == 0
        names = {f.name for f in out.iterdir()}
        assert names == {"manifest.json", "result.json", "fixed_point.json"}
        result = json.loads((out / "result.json").read_text())
        assert result["lambda"] == pytest.approx(-0.3995352805, abs=1e-9)
        assert result["residual"] < 1e-10
        assert all(c["passed"] for c in result["checks"])

    def test_manifest_contents(self, tmp_path):
        out = tmp_path / "run"
        assert run(["fixed-point", "--seed", "7", "--N", "24"], out) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "fixed-point"
        assert man["seed"] == 7
        assert man["config"]["N"] == 24
        assert "version" in man

    def test_reproducible_outputs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["fixed-point", "--seed", "3"], a) == 0
        assert run(["fixed-point", "--seed", "3"], b) == 0
        for name in ("manifest.json", "result.json", "fixed_point.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_no_output_outside_out(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        out = tmp_path / "only_here"
        assert run(["fixed-point"], out) == 0
        assert {f.name for f in tmp_path.iterdir()} == {"only_here"}


class TestConfigResolution:
    def test_toml_table_applies(self, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('["fixed-point"]\nN = 22\nseed = 5\n')
        out = tmp_path / "run"
        assert run(["fixed-point", "--config", str(cfg)], out) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["N"] == 22
        assert man["seed"] == 5

    def test_flag_overrides_toml(self, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text("N = 22\n")
        out = tmp_path / "run"
        assert run(["fixed-point", "--config", str(cfg), "--N", "26"],
                   out) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["N"] == 26

    def test_missing_config_file(self, tmp_path):
        assert run(["fixed-point", "--config", str(tmp_path / "nope.toml")],
                   tmp_path / "run") == 2

    def test_bad_grid_is_config_error(self, tmp_path):
        assert run(["spectrum", "--p-grid", "junk"], tmp_path / "run") == 2

    def test_unknown_flag_is_config_error(self, tmp_path):
        assert cli.main(["fixed-point", "--frobnicate"]) == 2

    def test_too_small_n_grid(self, tmp_path):
        assert run(["clt", "--n", "64", "--M", "100"], tmp_path / "run") == 2


class TestExitCodes:
    def test_numerical_failure_is_3(self, tmp_path):
        # an untuned offset cannot be Fibonacci-renormalized
        assert run(["circle-spectrum", "--omega", "0.5"],
                   tmp_path / "run") == 3

    def test_check_failure_is_4(self, tmp_path):
        assert run(["circle-tune", "--check", "--depth", "14",
                    "--iters", "20000", "--n-max", "11"],
                   tmp_path / "run") == 4

    def test_failed_checks_without_check_flag_exit_0(self, tmp_path):
        out = tmp_path / "run"
        assert run(["circle-tune", "--depth", "14", "--iters", "20000",
                    "--n-max", "11"], out) == 0
        result = json.loads((out / "result.json").read_text())
        assert not all(c["passed"] for c in result["checks"])


class TestSpectrumAndConvexity:
    def test_spectrum_files(self, tmp_path):
        out = tmp_path / "run"
        assert run(["spectrum", "--check"], out) == 0
        rho_lines = (out / "rho.csv").read_text().splitlines()
        assert rho_lines[0].startswith("p,rho")
        assert len(rho_lines) == 5

    def test_convexity_gamma(self, tmp_path):
        out = tmp_path / "run"
        assert run(["convexity", "--check"], out) == 0
        result = json.loads((out / "result.json").read_text())
        assert result["gamma"] == pytest.approx(3.8836, abs=0.01)
        # four structural verdicts plus the two check-mode ones
        assert len(result["checks"]) == 6


class TestSimulationCommands:
    def test_example2_small(self, tmp_path):
        out = tmp_path / "run"
        assert run(["example2", "--M", "2000", "--n", "8"], out) == 0
        result = json.loads((out / "result.json").read_text())
        assert result["band"] == pytest.approx(1.63 / math.sqrt(2000))
        lines = (out / "ks_gaussian.csv").read_text().splitlines()
        assert lines[0] == "n,ks"
        assert len(lines) == 9

    def test_berry_esseen_rotation(self, tmp_path):
        out = tmp_path / "run"
        assert run(["berry-esseen", "--M", "3000", "--n-lo", "3",
                    "--n-hi", "7"], out) == 0
        result = json.loads((out / "result.json").read_text())
        assert result["map"] == "rotation"
        assert result["ks_slope"] < 0.0
        assert (out / "ks_series.csv").exists()

    def test_circle_clt_with_given_constants(self, tmp_path):
        out = tmp_path / "run"
        code = run(["circle-clt", "--omega", "0.606661063465832",
                    "--rho1", "2.1978", "--rho2", "3.1990",
                    "--rho3", "4.9182", "--lam", "-0.7759",
                    "--M", "3000", "--q-lo", "6", "--q-hi", "10"], out)
        assert code == 0
        result = json.loads((out / "result.json").read_text())
        assert result["fibonacci_times"] == [8, 21, 55]


class TestReport:
    def test_missing_manifest(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run(["report", str(empty)], tmp_path / "rep") == 3

    def test_summary_table(self, tmp_path):
        out = tmp_path / "run"
        assert run(["fixed-point", "--check"], out) == 0
        rep = tmp_path / "rep"
        assert run(["report", str(out)], rep) == 0
        text = (rep / "summary.md").read_text()
        assert "fixed-point" in text
        assert "| fixed_point_residual |" in text
        assert "FAIL" not in text

    def test_same_seed_identical_summaries(self, tmp_path):
        texts = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            assert run(["fixed-point", "--seed", "9"], out) == 0
            rep = tmp_path / f"rep_{tag}"
            assert run(["report", str(out)], rep) == 0
            texts.append((rep / "summary.md").read_text())
        assert texts[0] == texts[1]
