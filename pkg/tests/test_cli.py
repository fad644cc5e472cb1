import pytest

from semsim import __version__
from semsim.cli import build_parser, main

SMALL_YAML = """\
scene:
  width: 32
  height: 24
  num_objects: 2
  duration: 30
  seed: 3
sweep:
  thresholds: [0.0, 0.4]
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(SMALL_YAML)
    return path


class TestParser:
    def test_subcommands_exist(self):
        parser = build_parser()
        for cmd in ("run", "sweep", "baseline", "verify", "gen-scene", "serve"):
            args = parser.parse_args([cmd] if cmd != "serve" else ["serve"])
            assert args.command == cmd

    def test_common_flags(self):
        args = build_parser().parse_args(
            ["run", "--config", "a.yaml", "--out", "o", "--seed", "5",
             "--threshold", "0.3"]
        )
        assert str(args.config) == "a.yaml"
        assert str(args.out) == "o"
        assert args.seed == 5 and args.threshold == 0.3

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_missing_command_errors(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestRunCommand:
    def test_writes_ticks_and_summary(self, config_path, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "kind: gated" in text
        assert "transmits:" in text
        ticks = (out / "ticks.csv").read_text()
        assert ticks.splitlines()[0].startswith("tick,")
        assert len(ticks.splitlines()) == 31

    def test_threshold_zero_transmits_all(self, config_path, tmp_path, capsys):
        out = tmp_path / "o2"
        main(["run", "--config", str(config_path), "--out", str(out),
              "--threshold", "0"])
        assert "transmits: 30" in capsys.readouterr().out

    def test_defaults_without_config(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code = main(["run", "--out", "results", "--threshold", "0.9"])
        assert code == 0
        assert (tmp_path / "results" / "ticks.csv").exists()

    def test_bad_config_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("scene:\n  weather: lava\n")
        code = main(["run", "--config", str(bad), "--out", str(tmp_path / "x")])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_exit_2(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "nope.yaml")])
        assert code == 2

    def test_negative_seed_exit_2(self, config_path, capsys):
        code = main(["run", "--config", str(config_path), "--seed", "-1"])
        assert code == 2

    def test_negative_threshold_exit_2(self, config_path, capsys):
        code = main(["run", "--config", str(config_path), "--threshold", "-0.2"])
        assert code == 2


class TestBaselineCommand:
    def test_every_tick_costed(self, config_path, tmp_path, capsys):
        out = tmp_path / "base"
        code = main(["baseline", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        assert "kind: baseline" in capsys.readouterr().out
        lines = (out / "ticks_baseline.csv").read_text().splitlines()
        assert len(lines) == 31
        assert all(line.split(",")[4] == "transmit" for line in lines[1:])


class TestSweepCommand:
    def test_outputs(self, config_path, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = main(["sweep", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        assert (out / "energy_vs_threshold.csv").exists()
        assert (out / "energy_vs_threshold.svg").exists()
        assert (out / "ticks_baseline.csv").exists()
        assert (out / "ticks_gamma_0.0.csv").exists()
        assert (out / "ticks_gamma_0.4.csv").exists()
        assert capsys.readouterr().out.count("wrote") == 5

    def test_byte_identical_across_runs(self, config_path, tmp_path, capsys):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["sweep", "--config", str(config_path), "--out", str(out_a)])
        main(["sweep", "--config", str(config_path), "--out", str(out_b)])
        for name in ("energy_vs_threshold.csv", "ticks_baseline.csv",
                     "ticks_gamma_0.0.csv", "ticks_gamma_0.4.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestVerifyCommand:
    def test_report_and_exit_code(self, config_path, tmp_path, capsys):
        out = tmp_path / "verify"
        code = main(["verify", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "[pass]" in text and "[FAIL]" not in text
        assert "checks passed" in text
        report = (out / "verify_report.csv").read_text()
        assert report.splitlines()[0] == "check,passed,measured,tolerance,detail"

    def test_report_byte_identical_across_runs(self, config_path, tmp_path, capsys):
        out_a, out_b = tmp_path / "va", tmp_path / "vb"
        main(["verify", "--config", str(config_path), "--out", str(out_a)])
        main(["verify", "--config", str(config_path), "--out", str(out_b)])
        a = (out_a / "verify_report.csv").read_bytes()
        assert a == (out_b / "verify_report.csv").read_bytes()


class TestGenSceneCommand:
    def test_writes_pgm_pairs(self, tmp_path, capsys):
        cfg = tmp_path / "tiny.yaml"
        cfg.write_text("scene:\n  width: 16\n  height: 12\n  duration: 4\n  seed: 1\n")
        out = tmp_path / "scene"
        code = main(["gen-scene", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        frames = sorted(p.name for p in out.glob("frame_*.pgm"))
        masks = sorted(p.name for p in out.glob("mask_*.pgm"))
        assert frames == [f"frame_{i:04d}.pgm" for i in range(4)]
        assert masks == [f"mask_{i:04d}.pgm" for i in range(4)]
        head = (out / "frame_0000.pgm").read_bytes()[:20]
        assert head.startswith(b"P5\n16 12\n255\n")
