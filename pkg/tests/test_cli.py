import csv
import json

import pytest

from avdwf.cli import main
from avdwf.numerics import GradCheckResult

TINY = ["--n-samples", "20", "--epochs", "1"]


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr().out


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["gen", "--seed", "2", "--out", str(out), "--n-samples", "12"]) == 0
    return out


def test_gen_writes_manifest_and_samples(generated):
    lines = (generated / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 12
    assert len(list((generated / "samples").iterdir())) == 12
    stats = json.loads((generated / "stats.json").read_text())
    assert sum(v["real"] + v["fake"] for v in stats.values()) == 12


def test_train_outputs_and_determinism(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        code, _ = run(["train", "--seed", "3", "--out", str(tmp_path / name), *TINY], capsys)
        assert code == 0
        outs.append(tmp_path / name)
    for fname in ("model.ckpt", "metrics.json", "history.csv", "weights.csv"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes(), fname
    configs = [json.loads((o / "config.json").read_text()) for o in outs]
    assert [c.pop("out_dir") for c in configs] == [str(o) for o in outs]
    assert configs[0] == configs[1]
    rows = list(csv.DictReader((outs[0] / "history.csv").open()))
    assert [r["split"] for r in rows] == ["train", "val"]


def test_eval_and_infer_from_checkpoint(tmp_path, generated, capsys):
    ckpt_dir = tmp_path / "run"
    assert main(["train", "--seed", "1", "--out", str(ckpt_dir), "--manifest",
                 str(generated / "manifest.jsonl"), "--epochs", "1"]) == 0
    capsys.readouterr()
    code, out = run(["eval", "--checkpoint", str(ckpt_dir / "model.ckpt"), "--manifest",
                     str(generated / "manifest.jsonl"), "--split", "train",
                     "--out", str(tmp_path / "ev")], capsys)
    assert code == 0 and "acc" in json.loads(out)
    sample = next((generated / "samples").iterdir())
    code, out = run(["infer", str(sample), "--checkpoint", str(ckpt_dir / "model.ckpt")], capsys)
    assert code == 0
    assert out.startswith("P(fake) = ")
    assert out.count("W_F") == 2


def test_infer_literal_mode_reports_unit_weights(generated, capsys):
    sample = next((generated / "samples").iterdir())
    code, out = run(["infer", str(sample), "--weight-mode", "literal", "--seed", "4"], capsys)
    assert code == 0
    assert "W_F = 1.000000  W_A = 1.000000" in out


def test_unknown_flag_prints_usage(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--no-such-flag"])
    assert info.value.code != 0
    assert "usage:" in capsys.readouterr().err


def test_gradcheck_exit_code_follows_results(monkeypatch, capsys):
    code, out = run(["gradcheck", "--seed", "1", "--points", "1"], capsys)
    assert code == 0 and "FAIL" not in out

    def broken(seed, points):
        return [GradCheckResult("deliberately wrong", 1.0, 1.0, 1, 1e-5)]

    monkeypatch.setattr("avdwf.cli.run_gradient_suite", broken)
    code, out = run(["gradcheck", "--seed", "1"], capsys)
    assert code == 1 and "FAIL" in out


def test_ablate_csv_shape(tmp_path, capsys):
    code, _ = run(["ablate", "--seeds", "1,2,3", "--out", str(tmp_path), "--n-samples", "40",
                   "--epochs", "0"], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "ablation.csv").open()))
    assert len(rows) == 18
    assert {(r["fusion_mode"], r["tokenizer_mode"]) for r in rows} == {
        (f, t) for f in ("visual_only", "av_concat", "av_dwf") for t in ("frame", "patch")}
    assert set(rows[0]) >= {"seed", "acc", "auc"}


def test_balance_subcommand(tmp_path, capsys):
    from avdwf.dataio.manifest import ManifestEntry, SampleManifest
    entries = [ManifestEntry(f"s{i}", "f", "a.wav", "real" if i < 18 else "fake", "train")
               for i in range(100)]
    SampleManifest(entries).save(tmp_path / "m.jsonl")
    code, out = run(["balance", str(tmp_path / "m.jsonl"), "--target", "43:57",
                     "--out", str(tmp_path / "b")], capsys)
    assert code == 0
    back = SampleManifest.load(tmp_path / "b" / "manifest.jsonl")
    assert back.counts() == {"real": 18, "fake": 24}
    assert "18:82" in out
