import json

import pytest

from pseudosign import cli, nnet
from pseudosign.mesher import read_obj


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("gen-corpus", "--out", d / "corpus.json", "--count", 2, "--seed", 5) == 0
    assert run("--threads", 1, "train", "--corpus", d / "corpus.json", "--res", 16, "--epochs", 1,
               "--max-extra-iters", 1, "--out", d / "w.udfm") == 0
    return d


def test_gen_corpus_deterministic(tmp_path):
    for name in "ab":
        assert run("gen-corpus", "--out", tmp_path / f"{name}.json", "--count", 5, "--seed", 3) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert len(json.loads((tmp_path / "a.json").read_text())) == 5


def test_gen_corpus_empty_warns(tmp_path, caplog):
    assert run("gen-corpus", "--out", tmp_path / "e.json", "--count", 0) == 0
    assert json.loads((tmp_path / "e.json").read_text()) == []
    assert "empty corpus" in caplog.text


def test_train_outputs(work):
    m = nnet.load_weights(work / "w.udfm")
    assert m.n_params == 2_132_096
    log = (work / "w.udfm.log.csv").read_text().splitlines()
    assert log[0] == "epoch,shape,iters,loss" and len(log) == 3
    cfg = json.loads((work / "w.udfm.config.json").read_text())
    assert cfg["lr"] == 5e-4 and cfg["noise_sigma"] == 1.0 and cfg["epochs"] == 1


def test_missing_corpus_is_usage_error(tmp_path, capsys):
    assert run("train", "--corpus", tmp_path / "nope.json", "--out", tmp_path / "w") == 2
    assert "usage" in capsys.readouterr().err


def test_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run("train", "--bogus")
    assert exc.value.code == 2


def test_config_merge_flags_win(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"count": 4, "seed": 9}))
    assert run("gen-corpus", "--config", tmp_path / "c.json", "--count", 2, "--out", tmp_path / "o.json") == 0
    cfg = json.loads((tmp_path / "o.json.config.json").read_text())
    assert cfg["count"] == 2 and cfg["seed"] == 9
    (tmp_path / "bad.json").write_text(json.dumps({"nope": 1}))
    with pytest.raises(SystemExit):
        run("gen-corpus", "--config", tmp_path / "bad.json", "--out", tmp_path / "o.json")


SHAPE = json.dumps({"kind": "sphere", "params": {"radius": 0.5}})


def test_mesh_oracle(tmp_path):
    assert run("mesh", "--shape", SHAPE, "--res", 24, "--oracle", "--out", tmp_path / "gt.obj") == 0
    m = read_obj(tmp_path / "gt.obj")
    assert m.n_triangles > 0 and m.boundary_edge_count() == 0


def test_mesh_snapshots_and_dump(work, tmp_path):
    out = tmp_path / "s.obj"
    assert run("mesh", "--weights", work / "w.udfm", "--shape", work / "corpus.json", "--index", 1,
               "--res", 16, "--iters", 3, "--snapshots", "--snapshot-dump", tmp_path / "s.udfd",
               "--noise-sigma", 0.3, "--out", out) == 0
    assert out.exists()
    for i in (1, 2, 3):
        assert (tmp_path / f"s_iter{i}.obj").exists()
    assert (tmp_path / "s_iter3.obj").read_bytes() == out.read_bytes()
    from pseudosign.trainer import load_dataset
    assert len(load_dataset(tmp_path / "s.udfd")) == 3


def test_mesh_requires_weights(tmp_path):
    assert run("mesh", "--shape", SHAPE, "--out", tmp_path / "x.obj") == 2
    assert run("mesh", "--shape", "{not json", "--oracle", "--out", tmp_path / "x.obj") == 2


def test_determinism(work, tmp_path):
    a, b = tmp_path / "a.udfm", tmp_path / "b.udfm"
    for w in (a, b):
        assert run("--threads", 1, "train", "--corpus", work / "corpus.json", "--res", 16, "--epochs", 1,
                   "--max-extra-iters", 1, "--seed", 4, "--out", w) == 0
    assert a.read_bytes() == b.read_bytes()
    for o in ("a.obj", "b.obj"):
        assert run("--threads", 1, "mesh", "--weights", a, "--shape", SHAPE, "--res", 16,
                   "--noise-sigma", 0.3, "--seed", 2, "--out", tmp_path / o) == 0
    assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()


def test_eval_self(tmp_path, capsys):
    run("mesh", "--shape", SHAPE, "--res", 24, "--oracle", "--out", tmp_path / "gt.obj")
    capsys.readouterr()
    assert run("eval", "--pred", tmp_path / "gt.obj", "--gt", tmp_path / "gt.obj", "--samples", 5000) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    rec = dict(zip(header.split(","), row.split(",")))
    assert float(rec["chamfer_e5"]) * 1e-5 < 1e-12 and float(rec["f1"]) == 1.0


def test_eval_batch_summary(tmp_path, capsys):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    for name, r in (("a", 0.5), ("b", 0.4)):
        shape = json.dumps({"kind": "sphere", "params": {"radius": r}})
        run("mesh", "--shape", shape, "--res", 16, "--oracle", "--out", gt / f"{name}.obj")
        run("mesh", "--shape", shape, "--res", 20, "--oracle", "--out", pred / f"{name}_iter1.obj")
    capsys.readouterr()
    assert run("eval", "--pred", pred, "--gt", gt, "--samples", 2000) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [l.split(",")[0] for l in lines[1:]] == ["a_iter1", "b_iter1", "median", "mean"]
    assert lines[1].split(",")[1] == "1"


def test_eval_parse_error_names_file(tmp_path, capsys):
    (tmp_path / "bad.obj").write_text("v 0 0 0\nf 0 1 2\n")
    assert run("eval", "--pred", tmp_path / "bad.obj", "--gt", tmp_path / "bad.obj") == 1
    assert "bad.obj:2" in capsys.readouterr().err
