import json
import os

import numpy as np
import pytest

from fullinterp import io
from fullinterp.cli import main, parse_args
from fullinterp.geometry import ImagePatch
from fullinterp.synthetic import TUBES_SCHEMA


def tree_bytes(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    data = str(root / "head")
    assert main(["synth", "--out", data, "--n-pos", "8", "--n-test", "3", "--n-neg", "4", "--seed", "7"]) == 0
    model = str(root / "model.json")
    train = ["train", "--data", f"{data}/manifest.json", "--out", model, "--negatives", "400", "--trees", "8"]
    assert main(train + ["--seed", "3"]) == 0
    return root, data, model


def test_synth_twice_gives_identical_trees(tmp_path):
    args = ["synth", "--n-pos", "5", "--n-test", "2", "--n-neg", "3", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b
    assert {"schema.json", "manifest.json"} <= set(a)
    assert sum(k.startswith("neg") for k in a) == 3
    assert sum(k.startswith("test") and k.endswith(".pgm") for k in a) == 2


def test_synth_default_counts():
    ns = parse_args(["synth", "--out", "x"])
    assert (ns.n_pos, ns.n_test, ns.n_neg, ns.class_name) == (120, 40, 60, "head")
    ns = parse_args(["train", "--data", "m", "--out", "o"])
    assert (ns.negatives, ns.trees, ns.positives_cap, ns.seed, ns.threads) == (25000, 100, None, 0, 1)


def test_train_then_evaluate(corpus, tmp_path):
    _, data, model = corpus
    out = tmp_path / "report.json"
    assert main(["evaluate", "--model", model, "--data", f"{data}/manifest.json", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["format"] == "fullinterp-eval-report"
    assert doc["n_images"] == 3
    assert 0.0 <= doc["dataset_mean_iou"] <= 1.0


def test_interpret_writes_result_and_svg(corpus, tmp_path):
    _, data, model = corpus
    img = f"{data}/test/pos_0008.pgm"
    out, svg = tmp_path / "r.json", tmp_path / "r.svg"
    assert main(["interpret", "--model", model, "--image", img, "--out", str(out), "--svg", str(svg)]) == 0
    assert set(io.result_from_dict(json.loads(out.read_text()))) == {n for n, _ in io.load_model(model).schema.parts}
    assert svg.read_bytes().count(b'<g id="part-') == 8


def test_candidates_command(corpus, tmp_path):
    _, data, _ = corpus
    out = tmp_path / "c.json"
    assert main(["candidates", "--image", f"{data}/train/pos_0000.pgm", "--out", str(out)]) == 0
    cands = io.candidates_from_dict(json.loads(out.read_text()))
    assert cands.contours and cands.points and cands.regions


def test_intervene_command(corpus, tmp_path):
    _, data, model = corpus
    img = f"{data}/test/pos_0009.pgm"
    out, out_img = tmp_path / "i.json", tmp_path / "i.pgm"
    args = ["intervene", "--model", model, "--image", img, "--out", str(out), "--out-image", str(out_img)]
    assert main(args + ["--recolor", "1,1"]) == 0
    doc = json.loads(out.read_text())
    assert doc["score_delta"] == pytest.approx(doc["original_score"] - doc["transformed_score"])
    assert main(args + ["--sketch", "1.0"]) == 0
    assert set(np.unique(io.load_image(out_img).pixels)) <= {0.0, 1.0}
    assert main(args) == 1
    assert main(args + ["--recolor", "1;1"]) == 1


def test_interpret_with_other_schema_exits_1(corpus, tmp_path, capsys):
    _, data, model = corpus
    schema = tmp_path / "tubes.json"
    io.save_schema(TUBES_SCHEMA, schema)
    rc = main(["interpret", "--model", model, "--image", f"{data}/test/pos_0008.pgm",
               "--schema", str(schema), "--out", str(tmp_path / "r.json")])
    assert rc == 1
    assert "FingerprintMismatch" in capsys.readouterr().err


def test_validation_errors_exit_1(tmp_path, capsys):
    assert main([]) == 1
    assert main(["fly"]) == 1
    assert main(["synth", "--out", str(tmp_path), "--bogus"]) == 1
    assert main(["synth", "--out", str(tmp_path), "--n-pos", "0"]) == 1
    assert main(["train", "--data", str(tmp_path / "none.json"), "--out", str(tmp_path / "m.json")]) == 1
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n\x00")
    assert main(["candidates", "--image", str(bad), "--out", str(tmp_path / "c.json")]) == 1


def test_uninterpretable_image_exits_2(corpus, tmp_path, capsys):
    _, _, model = corpus
    blank = tmp_path / "blank.pgm"
    io.save_image(ImagePatch(np.full((64, 64), 0.5)), blank)
    assert main(["interpret", "--model", model, "--image", str(blank), "--out", str(tmp_path / "r.json")]) == 2
    assert "UninterpretablePatch" in capsys.readouterr().err


def test_config_defaults_and_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trees": 7, "seed": 4, "data": "m.json", "n-pos": 3}))
    ns = parse_args(["--config", str(cfg), "train", "--out", "o"])
    assert (ns.trees, ns.seed, ns.data) == (7, 4, "m.json")
    ns = parse_args(["train", "--config", str(cfg), "--out", "o", "--trees", "9", "--seed", "1"])
    assert (ns.trees, ns.seed) == (9, 1)
    cfg.write_text(json.dumps({"colour": 1}))
    assert main(["--config", str(cfg), "synth", "--out", str(tmp_path / "s")]) == 1


def test_output_does_not_depend_on_threads(corpus, tmp_path):
    _, data, model = corpus
    manifest = f"{data}/manifest.json"
    docs = []
    for t in ("1", "3"):
        m = tmp_path / f"m{t}.json"
        r = tmp_path / f"r{t}.json"
        base = ["--threads", t, "--seed", "3"]
        assert main(["train", "--data", manifest, "--out", str(m), "--negatives", "400", "--trees", "8"] + base) == 0
        assert main(["evaluate", "--model", str(m), "--data", manifest, "--out", str(r)] + base) == 0
        docs.append((m.read_bytes(), r.read_bytes()))
    assert docs[0] == docs[1]
    with open(model, "rb") as fh:
        assert fh.read() == docs[0][0]
