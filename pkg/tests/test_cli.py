import json

import numpy as np
import pytest

from revsci.cli import main
from revsci.numerics import read_meta, read_tensor


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.fixture
def checkpoint(tmp_path, capsys):
    cfg = {"network": {"c1": 4, "m": 2, "L": 2, "B": 4, "dtype": "f64"}, "epochs": 1,
           "train_scenes": 2, "val_scenes": 1, "frame_shape": [16, 16]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "train", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "run"))
    assert code == 0
    return tmp_path / "run" / "final"


class TestSimulate:
    def test_byte_identical(self, tmp_path, capsys):
        args = ["--B", "8", "--nx", "64", "--ny", "64", "--scheme", "shifting", "--seed", "7"]
        assert run(capsys, "simulate", *args, "--out", str(tmp_path / "a"))[0] == 0
        assert run(capsys, "simulate", *args, "--out", str(tmp_path / "b"))[0] == 0
        a, b = snapshot(tmp_path / "a"), snapshot(tmp_path / "b")
        assert set(a) == {"truth.rvt", "truth.json", "masks.rvt", "masks.json", "measurement.rvt", "measurement.json"}
        assert a == b
        assert read_tensor(tmp_path / "a" / "measurement.rvt").shape == (64, 64)
        assert read_meta(tmp_path / "a" / "masks.rvt")["scheme"] == "shifting"

    def test_seed_changes_output(self, tmp_path, capsys):
        run(capsys, "simulate", "--B", "4", "--nx", "16", "--ny", "16", "--seed", "1", "--out", str(tmp_path / "a"))
        run(capsys, "simulate", "--B", "4", "--nx", "16", "--ny", "16", "--seed", "2", "--out", str(tmp_path / "b"))
        assert snapshot(tmp_path / "a") != snapshot(tmp_path / "b")

    def test_color_and_dtype(self, tmp_path, capsys):
        code, out, _ = run(capsys, "simulate", "--B", "4", "--nx", "8", "--ny", "8", "--color", "--dtype", "f64",
                           "--sigma", "0.01", "--out", str(tmp_path))
        assert code == 0 and out["shape"] == [3, 4, 8, 8]
        assert read_tensor(tmp_path / "truth.rvt").dtype == np.float64


class TestUsage:
    @pytest.mark.parametrize("argv", [[], ["simulate"], ["simulate", "--out", "x", "--bogus"],
                                      ["membench", "--L", "a,b"], ["gradcheck", "--dtype", "f16"], ["nope"]])
    def test_exit_one(self, argv, capsys):
        code, out, err = run(capsys, *argv)
        assert code == 1 and out is None and err["type"] == "usage"

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "reconstruct", "--measurement", str(tmp_path / "no.rvt"),
                           "--masks", str(tmp_path / "no.rvt"), "--ckpt", str(tmp_path))
        assert code == 1 and "error" in err

    @pytest.mark.parametrize("cmd", ["simulate", "train", "reconstruct", "eval", "gradcheck", "membench"])
    def test_seed_and_dtype_flags(self, cmd, capsys):
        with pytest.raises(SystemExit):
            main([cmd, "--help"])
        text = capsys.readouterr().out
        assert "--seed" in text and "--dtype" in text


class TestPipeline:
    def test_reconstruct(self, tmp_path, checkpoint, capsys):
        run(capsys, "simulate", "--B", "4", "--nx", "16", "--ny", "16", "--seed", "3", "--out", str(tmp_path / "s"))
        args = ["reconstruct", "--measurement", str(tmp_path / "s" / "measurement.rvt"),
                "--masks", str(tmp_path / "s" / "masks.rvt"), "--ckpt", str(checkpoint)]
        code, out, _ = run(capsys, *args)
        assert code == 0 and out["shape"] == [1, 4, 16, 16]
        first = (tmp_path / "s" / "xhat.rvt").read_bytes()
        assert read_tensor(tmp_path / "s" / "xhat.rvt").shape == (1, 4, 16, 16)
        run(capsys, *args)
        assert (tmp_path / "s" / "xhat.rvt").read_bytes() == first

    def test_reconstruct_wrong_B(self, tmp_path, checkpoint, capsys):
        run(capsys, "simulate", "--B", "8", "--nx", "16", "--ny", "16", "--out", str(tmp_path / "s"))
        code, _, err = run(capsys, "reconstruct", "--measurement", str(tmp_path / "s" / "measurement.rvt"),
                           "--masks", str(tmp_path / "s" / "masks.rvt"), "--ckpt", str(checkpoint))
        assert code == 1 and "B=4" in err["error"]

    def test_eval(self, tmp_path, checkpoint, capsys):
        run(capsys, "simulate", "--B", "4", "--nx", "16", "--ny", "16", "--seed", "3", "--out", str(tmp_path / "s"))
        code, out, _ = run(capsys, "eval", "--ckpt", str(checkpoint), "--data", str(tmp_path / "s"), "--no-timing")
        assert code == 0
        assert [r["scene"] for r in out["rows"]] == ["truth"]
        _, again, _ = run(capsys, "eval", "--ckpt", str(checkpoint), "--data", str(tmp_path / "s"), "--no-timing")
        assert again == out

    def test_train_deterministic(self, tmp_path, checkpoint, capsys):
        cfg = str(tmp_path / "cfg.json")
        run(capsys, "train", "--config", cfg, "--out", str(tmp_path / "again"))
        assert snapshot(tmp_path / "run" / "final") == snapshot(tmp_path / "again" / "final")
        assert (tmp_path / "run" / "metrics.jsonl").read_bytes() == (tmp_path / "again" / "metrics.jsonl").read_bytes()

    def test_train_divergence_exit_two(self, tmp_path, capsys):
        cfg = {"network": {"c1": 4, "m": 2, "L": 1, "B": 4, "dtype": "f64"}, "epochs": 3, "lr0": 1e30,
               "train_scenes": 2, "val_scenes": 1, "frame_shape": [16, 16]}
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        code, _, err = run(capsys, "train", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "run"))
        assert code == 2 and err["type"] == "numerical"
        assert (tmp_path / "run" / "last_good" / "manifest.json").exists()


class TestVerification:
    def test_membench(self, capsys):
        code, out, _ = run(capsys, "membench", "--L", "18,28,50", "--engine", "reversible")
        assert code == 0
        peaks = [r["peak_activation_bytes"] for r in out["rows"]]
        assert len(peaks) == 3 and len(set(peaks)) == 1
        assert out["summary"]["reversible"]["constant"]

    def test_membench_naive_affine(self, capsys):
        code, out, _ = run(capsys, "membench", "--L", "2,4,8", "--engine", "naive", "--tracemalloc")
        assert code == 0 and out["summary"]["naive"]["affine"] and not out["summary"]["naive"]["constant"]
        assert all(r["tracemalloc_peak_bytes"] > 0 for r in out["rows"])

    def test_gradcheck(self, capsys):
        code, out, _ = run(capsys, "gradcheck", "--samples", "30", "--seed", "2")
        assert code == 0 and out["pass"] and out["parity"] < 1e-8
        assert out["finite_difference"]["reversible"]["checked"] == 30

    def test_gradcheck_failure_exit_two(self, capsys):
        code, _, err = run(capsys, "gradcheck", "--samples", "5", "--fd-tol", "0")
        assert code == 2 and err["type"] == "numerical"
