"""Command-line interface: flows, exit codes, reproducibility."""

import json
import struct

import numpy as np
import pytest

from conftest import moving_scene
from mird.cli import main
from mird.imaging import write_png
from mird.synthdata import gen_triplet


@pytest.fixture
def triplet_dir(tmp_path):
    trip = gen_triplet(moving_scene(21, h=48, w=64, speed=(4.0, 7.0)), 0.5)
    d = tmp_path / "triplet"
    d.mkdir()
    write_png(trip.i0, d / "frame1.png")
    write_png(trip.i_tau, d / "frame2.png")
    write_png(trip.i1, d / "frame3.png")
    return d


def scene_json(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps({
        "height": 48, "width": 64, "background": [0.9, 0.9, 0.9],
        "shapes": [{"kind": "disc", "center": [20, 24], "radius": 7,
                    "fill": [0.2, 0.4, 0.7], "outline": [0.05, 0.1, 0.2],
                    "outline_width": 2, "velocity": [8, 0]}],
    }))
    return path


class TestInterpolateCmd:
    def test_basic_run_with_gt_metrics(self, tmp_path, triplet_dir, capsys):
        out = tmp_path / "mid.png"
        code = main([
            "interpolate", "--i0", str(triplet_dir / "frame1.png"),
            "--i1", str(triplet_dir / "frame3.png"),
            "--gt", str(triplet_dir / "frame2.png"),
            "--tau", "0.5", "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        assert out.exists()
        summary = json.loads(capsys.readouterr().out.strip())
        assert {"tau_used", "steps", "seed", "wall_time_s", "psnr", "ssim"} <= set(summary)

    def test_byte_level_reproducibility(self, tmp_path, triplet_dir):
        args = ["interpolate", "--i0", str(triplet_dir / "frame1.png"),
                "--i1", str(triplet_dir / "frame3.png"),
                "--tau", "0.5", "--seed", "9"]
        out1, out2 = tmp_path / "a.png", tmp_path / "b.png"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_required_flag_exits_2(self, tmp_path, triplet_dir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["interpolate", "--i0", str(triplet_dir / "frame1.png"),
                  "--out", str(tmp_path / "x.png")])
        assert exc.value.code == 2

    def test_tau_out_of_range_exits_2(self, tmp_path, triplet_dir):
        code = main(["interpolate", "--i0", str(triplet_dir / "frame1.png"),
                     "--i1", str(triplet_dir / "frame3.png"),
                     "--tau", "1.5", "--out", str(tmp_path / "x.png")])
        assert code == 2

    def test_unreadable_input_exits_3(self, tmp_path):
        code = main(["interpolate", "--i0", str(tmp_path / "missing.png"),
                     "--i1", str(tmp_path / "missing2.png"),
                     "--out", str(tmp_path / "x.png")])
        assert code == 3

    def test_trajectory_dump(self, tmp_path, triplet_dir):
        traj = tmp_path / "traj"
        code = main(["interpolate", "--i0", str(triplet_dir / "frame1.png"),
                     "--i1", str(triplet_dir / "frame3.png"),
                     "--tau", "0.5", "--steps", "6", "--out", str(tmp_path / "m.png"),
                     "--dump-trajectory", str(traj)])
        assert code == 0
        assert len(list(traj.glob("state_*.png"))) == 7


class TestUncertaintyCmd:
    def test_writes_maps_and_summary(self, tmp_path, triplet_dir, capsys):
        out_dir = tmp_path / "unc"
        code = main(["uncertainty", "--i0", str(triplet_dir / "frame1.png"),
                     "--i1", str(triplet_dir / "frame3.png"),
                     "--tau", "0.5", "--samples", "4", "--seed", "2",
                     "--out-dir", str(out_dir)])
        assert code == 0
        for name in ("mean.png", "sd.png", "minmax.png", "summary.json"):
            assert (out_dir / name).exists()
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["samples"] == 4
        assert -1.0 <= summary["corr"] <= 1.0
        assert summary["sd_png_scale"] > 0.0

    def test_too_few_samples_exits_2(self, tmp_path, triplet_dir):
        code = main(["uncertainty", "--i0", str(triplet_dir / "frame1.png"),
                     "--i1", str(triplet_dir / "frame3.png"),
                     "--tau", "0.5", "--samples", "1", "--out-dir", str(tmp_path / "u")])
        assert code == 2


class TestTauCmd:
    def test_single_triplet_json(self, triplet_dir, capsys):
        code = main(["tau", "--i0", str(triplet_dir / "frame1.png"),
                     "--imid", str(triplet_dir / "frame2.png"),
                     "--i1", str(triplet_dir / "frame3.png")])
        assert code == 0
        summary = json.loads(capsys.readouterr().out.strip())
        assert 0.0 <= summary["tau"] <= 1.0
        assert not summary["degenerate"]

    def test_flo_injection(self, tmp_path, triplet_dir, capsys):
        from mird.flow import write_flo

        f = np.zeros((48, 64, 2))
        f[:, :, 0] = 3.0
        p0, p1 = tmp_path / "f0.flo", tmp_path / "f1.flo"
        write_flo(f, p0)
        write_flo(-f, p1)
        code = main(["tau", "--i0", str(triplet_dir / "frame1.png"),
                     "--imid", str(triplet_dir / "frame2.png"),
                     "--i1", str(triplet_dir / "frame3.png"),
                     "--flow0", str(p0), "--flow1", str(p1)])
        assert code == 0
        summary = json.loads(capsys.readouterr().out.strip())
        assert summary["tau"] == pytest.approx(0.5, abs=0.2)

    def test_batch_mode_csv_and_histogram(self, tmp_path, capsys):
        root = tmp_path / "set"
        root.mkdir()
        for k in range(2):
            trip = gen_triplet(moving_scene(30 + k, h=48, w=64, speed=(4.0, 7.0)), 0.5)
            sub = root / f"t{k}"
            sub.mkdir()
            write_png(trip.i0, sub / "frame1.png")
            write_png(trip.i_tau, sub / "frame2.png")
            write_png(trip.i1, sub / "frame3.png")
        code = main(["tau", "--dir", str(root)])
        captured = capsys.readouterr()
        assert code == 0
        lines = captured.out.strip().splitlines()
        assert lines[0] == "path,tau,mass0,mass1,degenerate"
        assert len(lines) == 3
        assert "histogram" in captured.err

    def test_missing_dir_exits_3(self, tmp_path):
        assert main(["tau", "--dir", str(tmp_path / "nope")]) == 3

    def test_empty_dir_warns_exit_0(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["tau", "--dir", str(empty)]) == 0
        assert "warning" in capsys.readouterr().err


class TestScheduleCmd:
    def test_csv_ladder(self, capsys):
        code = main(["schedule", "--tau", "0.25"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "t,eta_sum,eta_1,eta_2,alpha_1,alpha_2,sigma_t"
        assert len(lines) == 22  # header + t = 0..20
        first = lines[1].split(",")
        assert float(first[1]) == 0.0
        last = lines[-1].split(",")
        assert float(last[1]) == 0.99
        # partition (1 - tau, tau) = (0.75, 0.25)
        assert float(last[2]) == pytest.approx(0.99 * 0.75, abs=1e-12)

    def test_eta1_override(self, capsys):
        assert main(["schedule", "--tau", "0.5", "--eta1-sum", "0.0016"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert float(lines[2].split(",")[1]) == 0.0016


class TestSynthCmd:
    def test_generates_triplet_files(self, tmp_path, capsys):
        out = tmp_path / "gen"
        code = main(["synth", "--spec", str(scene_json(tmp_path)), "--tau", "0.3",
                     "--out", str(out), "--gt-flow"])
        assert code == 0
        for name in ("frame1.png", "frame2.png", "frame3.png", "meta.json", "gt.flo"):
            assert (out / name).exists()
        assert json.loads((out / "meta.json").read_text())["tau_true"] == 0.3

    def test_reproducible_bytes(self, tmp_path):
        spec = scene_json(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--spec", str(spec), "--tau", "0.4", "--out", str(a)]) == 0
        assert main(["synth", "--spec", str(spec), "--tau", "0.4", "--out", str(b)]) == 0
        for name in ("frame1.png", "frame2.png", "frame3.png"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestVerifyCmd:
    def test_default_passes(self, capsys):
        code = main(["verify", "--samples", "20000", "--seed", "0"])
        captured = capsys.readouterr()
        assert code == 0
        lines = captured.out.strip().splitlines()
        assert lines[0] == "check,statistic,expected,observed,z,verdict"
        assert all(line.endswith("pass") for line in lines[1:])
        checks = {line.split(",")[0] for line in lines[1:]}
        assert checks == {"schedule_endpoints", "n1_reduction",
                          "marginal_composition", "posterior_regression"}

    def test_below_minimum_samples_exits_2(self):
        assert main(["verify", "--samples", "100"]) == 2

    def test_broken_schedule_exits_1(self, capsys):
        code = main(["verify", "--samples", "20000", "--inject-broken-schedule"])
        captured = capsys.readouterr()
        assert code == 1
        assert "monotone_fraction" in captured.out
        assert "FAILED" in captured.err


class TestFloErrorPath:
    def test_bad_magic_exits_3(self, tmp_path, triplet_dir):
        bad = tmp_path / "bad.flo"
        bad.write_bytes(struct.pack("<fii", 1.0, 1, 1) + b"\x00" * 8)
        code = main(["tau", "--i0", str(triplet_dir / "frame1.png"),
                     "--imid", str(triplet_dir / "frame2.png"),
                     "--i1", str(triplet_dir / "frame3.png"),
                     "--flow0", str(bad), "--flow1", str(bad)])
        assert code == 3


class TestEnvironmentOverrides:
    def test_seed_env_used_when_flag_absent(self, tmp_path, triplet_dir, capsys, monkeypatch):
        monkeypatch.setenv("MIRD_SEED", "77")
        code = main(["interpolate", "--i0", str(triplet_dir / "frame1.png"),
                     "--i1", str(triplet_dir / "frame3.png"),
                     "--tau", "0.5", "--out", str(tmp_path / "m.png")])
        assert code == 0
        assert json.loads(capsys.readouterr().out.strip())["seed"] == 77

    def test_flag_beats_env(self, tmp_path, triplet_dir, capsys, monkeypatch):
        monkeypatch.setenv("MIRD_SEED", "77")
        code = main(["interpolate", "--i0", str(triplet_dir / "frame1.png"),
                     "--i1", str(triplet_dir / "frame3.png"),
                     "--tau", "0.5", "--seed", "5", "--out", str(tmp_path / "m.png")])
        assert code == 0
        assert json.loads(capsys.readouterr().out.strip())["seed"] == 5
