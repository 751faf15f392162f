import json
import shutil

import pytest

from laughfuse.cli import main
from laughfuse.fusion import read_fused_jsonl
from laughfuse.laughnet import ModelConfig, init_params, save_model
from laughfuse.vision.cascade import toy_cascade_path

from conftest import FIXTURES


def _manifest(e2e_run):
    return json.loads((e2e_run["root"] / "corpus" / "manifest.json").read_text())


def test_e2e_exit_codes_and_report(e2e_run):
    assert e2e_run["codes"] == [0, 0, 0, 0]
    rep = e2e_run["report"]
    assert set(rep) == {"threshold", "accuracy", "precision", "recall", "f1", "confusion", "per_clip"}
    ids = [c["id"] for c in rep["per_clip"]]
    assert ids == sorted(ids)
    assert sum(rep["confusion"].values()) == len(ids) == 12


def test_fused_dataset_shape(e2e_run):
    records = read_fused_jsonl(e2e_run["dataset"])
    assert len(records) == 40
    assert all(s.steps.shape == (200, 24) for s, _ in records)
    assert {sp for _, sp in records} == {"train", "test"}


def test_extract_and_train_are_deterministic(e2e_run, tmp_path, capsys):
    manifest = e2e_run["root"] / "corpus" / "manifest.json"
    assert main(["extract", "--manifest", str(manifest), "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "fused.jsonl").read_bytes() == e2e_run["dataset"].read_bytes()
    assert main(["train", "--dataset", str(e2e_run["dataset"]), "--out", str(tmp_path / "m.json")]) == 0
    assert (tmp_path / "m.json").read_bytes() == e2e_run["model"].read_bytes()
    det = json.loads((tmp_path / "f" / "detections" / "clip_001.json").read_text())
    assert len(det) == 50 and det[0]["idx"] == 0


def test_threshold_zero_gives_full_recall(e2e_run, tmp_path):
    out = tmp_path / "r.json"
    args = ["eval", "--dataset", str(e2e_run["dataset"]), "--model", str(e2e_run["model"]), "--out", str(out)]
    assert main([*args, "--threshold", "0"]) == 0
    rep = json.loads(out.read_text())
    assert rep["recall"] == 1.0 and rep["confusion"]["fn"] == 0 and rep["confusion"]["tn"] == 0


def test_predict_positive_and_negative(e2e_run, capsys):
    root = e2e_run["root"] / "corpus"
    seen = {}
    for e in _manifest(e2e_run):
        if e["split"] != "test" or e["label"] in seen:
            continue
        capsys.readouterr()
        code = main(
            [
                "predict",
                "--audio", str(root / e["audio_path"]),
                "--frames", str(root / e["frames_dir"]),
                "--fps", "25",
                "--model", str(e2e_run["model"]),
            ]
        )
        assert code == 0
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert set(out) == {"score", "pred"} and 0 < out["score"] < 1
        seen[e["label"]] = out["pred"]
    assert seen == {1: 1, 0: 0}


def test_inspect_cascade(capsys):
    assert main(["inspect-cascade", "--cascade", str(toy_cascade_path())]) == 0
    assert capsys.readouterr().out.strip() == "window 24x24, 1 stage, 2 features, 0 tilted features"
    assert main(["inspect-cascade", "--cascade", str(FIXTURES / "two_stage.xml")]) == 0
    assert capsys.readouterr().out.strip() == "window 24x24, 2 stages, 2 features, 1 tilted feature"


def test_usage_errors(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "c"), "--clips", "3"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["extract", "--manifest", "m.json"])
    assert info.value.code == 2
    bad = tmp_path / "cfg.json"
    bad.write_text('{"unknown": {}}')
    assert main(["train", "--dataset", "x", "--out", "y", "--config", str(bad)]) == 2


def test_missing_inputs_are_io_errors(tmp_path):
    assert main(["train", "--dataset", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "m.json")]) == 3
    assert main(["extract", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 3


def test_missing_frames_dir_names_the_clip(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "c"), "--clips", "4", "--seed", "1"]) == 0
    shutil.rmtree(tmp_path / "c" / "frames" / "clip_002")
    capsys.readouterr()
    code = main(["extract", "--manifest", str(tmp_path / "c" / "manifest.json"), "--out", str(tmp_path / "f")])
    assert code == 4
    assert "clip_002" in capsys.readouterr().err


def test_empty_split(e2e_run, tmp_path):
    lines = e2e_run["dataset"].read_text().splitlines()
    only_train = tmp_path / "train_only.jsonl"
    only_train.write_text("\n".join(l for l in lines if '"split":"train"' in l.replace(" ", "")) + "\n")
    out = tmp_path / "r.json"
    assert main(["eval", "--dataset", str(only_train), "--model", str(e2e_run["model"]), "--out", str(out)]) == 5
    only_test = tmp_path / "test_only.jsonl"
    only_test.write_text("\n".join(l for l in lines if '"split":"test"' in l.replace(" ", "")) + "\n")
    assert main(["train", "--dataset", str(only_test), "--out", str(tmp_path / "m.json")]) == 5


def test_dimension_mismatch(e2e_run, tmp_path):
    audio_only = tmp_path / "audio_model.json"
    save_model(init_params(ModelConfig(), 22), audio_only)
    out = tmp_path / "r.json"
    assert main(["eval", "--dataset", str(e2e_run["dataset"]), "--model", str(audio_only), "--out", str(out)]) == 6


def test_malformed_cascade_in_config(e2e_run, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"detection": {"cascade_path": str(FIXTURES / "bad_tree_depth.xml")}}))
    manifest = e2e_run["root"] / "corpus" / "manifest.json"
    assert main(["extract", "--manifest", str(manifest), "--config", str(cfg), "--out", str(tmp_path / "f")]) == 7
    assert main(["inspect-cascade", "--cascade", str(FIXTURES / "bad_xml.xml")]) == 7
