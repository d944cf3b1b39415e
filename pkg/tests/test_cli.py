import json

import numpy as np
import pytest

from som_anomaly import cli
from som_anomaly.metrics import GroundTruth, evaluate
from som_anomaly.synthetic import make_benchmark, write_dataset
from som_anomaly.tensorio import TensorFile, load_model, read_tensor, write_tensor

COMMON = ["--map-size", "4", "--input-size", "32", "--sigma", "1.0", "--epochs", "3", "--k", "2"]


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    bench = make_benchmark(
        seed=5, grid=4, dim=8, n_train=12, n_test_normal=4, n_test_anomalous=4,
        block=2, input_size=32,
    )
    root = tmp_path_factory.mktemp("data")
    write_dataset(bench, root)
    return root, bench


@pytest.fixture(scope="session")
def trained(dataset, tmp_path_factory):
    root, _ = dataset
    model = tmp_path_factory.mktemp("model") / "model.smdm"
    rc = cli.main(["train", "--features", str(root / "features"), "--model", str(model)] + COMMON)
    assert rc == 0
    return model


def test_train_writes_loadable_model(dataset, trained, capsys):
    grid, stats, meta = load_model(trained)
    assert meta.K == 4
    assert meta.D == 8
    assert meta.top_k == 2
    assert len(stats) == 16


def test_train_reports_quantization_error(dataset, tmp_path, capsys):
    root, _ = dataset
    model = tmp_path / "m.smdm"
    rc = cli.main(["train", "--features", str(root / "features"), "--model", str(model)] + COMMON)
    assert rc == 0
    out = capsys.readouterr().out
    assert "quantization error before=" in out and "after=" in out


def test_train_constant_gallery_reports_zero_error(tmp_path, capsys):
    vec = np.arange(8, dtype=np.float32)
    layer = np.broadcast_to(vec[:, None, None], (8, 4, 4)).copy()
    feat = tmp_path / "features" / "train"
    feat.mkdir(parents=True)
    for i in range(4):
        write_tensor(TensorFile(layer.shape, layer), feat / f"img{i}_layer1.smdt")
    model = tmp_path / "m.smdm"
    rc = cli.main(["train", "--features", str(tmp_path / "features"), "--model", str(model)]
                  + COMMON)
    assert rc == 0
    out = capsys.readouterr().out
    assert "before=0 " in out or "before=0\n" in out


def test_score_outputs_and_determinism(dataset, trained, tmp_path):
    root, bench = dataset
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    for out in (out1, out2):
        rc = cli.main(["score", "--features", str(root / "features"), "--model", str(trained),
                       "--out", str(out)] + COMMON)
        assert rc == 0
    ids = bench.test_ids
    for iid in ids:
        assert (out1 / f"{iid}_amap.smdt").is_file()
        amap = read_tensor(out1 / f"{iid}_amap.smdt")
        assert amap.shape == (32, 32)
    assert (out1 / "scores.csv").read_bytes() == (out2 / "scores.csv").read_bytes()
    sample = f"{ids[0]}_amap.smdt"
    assert (out1 / sample).read_bytes() == (out2 / sample).read_bytes()


def test_scores_csv_matches_map_maxima(dataset, trained, tmp_path):
    root, _ = dataset
    out = tmp_path / "s"
    cli.main(["score", "--features", str(root / "features"), "--model", str(trained),
              "--out", str(out)] + COMMON)
    rows = (out / "scores.csv").read_text().strip().splitlines()
    assert rows[0] == "image_id,score"
    for row in rows[1:]:
        iid, score = row.split(",")
        amap = read_tensor(out / f"{iid}_amap.smdt")
        assert float(score) == float(amap.data.max())


def test_missing_layer_file_is_explicit_error(dataset, trained, tmp_path, capsys):
    root, _ = dataset
    feat = tmp_path / "features" / "test"
    feat.mkdir(parents=True)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(8, 4, 4)).astype(np.float32)
    b = rng.normal(size=(4, 2, 2)).astype(np.float32)
    write_tensor(TensorFile(a.shape, a), feat / "x_layer1.smdt")
    write_tensor(TensorFile(b.shape, b), feat / "x_layer2.smdt")
    write_tensor(TensorFile(a.shape, a), feat / "y_layer1.smdt")  # y lacks layer 2
    rc = cli.main(["score", "--features", str(tmp_path / "features"), "--model", str(trained),
                   "--out", str(tmp_path / "out")] + COMMON)
    assert rc == 2
    err = capsys.readouterr().err
    assert "y" in err and "y_layer2.smdt" in err


def test_evaluate_matches_library(dataset, trained, tmp_path):
    root, bench = dataset
    maps_dir = tmp_path / "maps"
    cli.main(["score", "--features", str(root / "features"), "--model", str(trained),
              "--out", str(maps_dir)] + COMMON)
    out_dir = tmp_path / "report"
    rc = cli.main(["evaluate", "--maps", str(maps_dir), "--gt", str(root / "gt"),
                   "--out", str(out_dir), "--category", "synthetic"] + COMMON)
    assert rc == 0
    payload = json.loads((out_dir / "report.json").read_text())
    cat = payload["categories"]["synthetic"]
    for value in cat.values():
        assert 0.0 <= value <= 1.0
    assert payload["average"] == cat  # single category average equals the row

    maps = {}
    scores = {}
    for row in (maps_dir / "scores.csv").read_text().strip().splitlines()[1:]:
        iid, s = row.split(",")
        scores[iid] = float(s)
        maps[iid] = read_tensor(maps_dir / f"{iid}_amap.smdt").data.astype(np.float64)
    masks = {iid: bench.masks[i] for i, iid in enumerate(bench.test_ids)}
    labels = {iid: int(bench.labels[i]) for i, iid in enumerate(bench.test_ids)}
    direct = evaluate(maps, scores, GroundTruth(masks, labels))
    assert cat["pixel_auroc"] == pytest.approx(direct.pixel_auroc, abs=1e-12)
    assert cat["image_auroc"] == pytest.approx(direct.image_auroc, abs=1e-12)
    assert cat["pro_score"] == pytest.approx(direct.pro_score, abs=1e-12)
    assert (out_dir / "report.txt").read_text().strip()


def test_sweep_single_setting_equals_evaluate(dataset, tmp_path):
    root, _ = dataset
    out = tmp_path / "sweep"
    rc = cli.main(["sweep", "--features", str(root / "features"), "--gt", str(root / "gt"),
                   "--out", str(out), "--k-values", "2", "--map-sizes", "4"] + COMMON)
    assert rc == 0
    sweep = json.loads((out / "sweep.json").read_text())
    assert len(sweep["settings"]) == 1
    setting = sweep["settings"][0]
    assert setting["map_size"] == 4 and setting["top_k"] == 2

    maps_dir = out / "K4_k2"
    report_dir = tmp_path / "ref"
    cli.main(["evaluate", "--maps", str(maps_dir), "--gt", str(root / "gt"),
              "--out", str(report_dir)] + COMMON)
    ref = json.loads((report_dir / "report.json").read_text())["categories"]["dataset"]
    assert setting["metrics"] == ref


def test_sweep_multiple_k(dataset, tmp_path):
    root, _ = dataset
    out = tmp_path / "sweep"
    rc = cli.main(["sweep", "--features", str(root / "features"), "--gt", str(root / "gt"),
                   "--out", str(out), "--k-values", "1,2"] + COMMON)
    assert rc == 0
    sweep = json.loads((out / "sweep.json").read_text())
    assert [s["top_k"] for s in sweep["settings"]] == [1, 2]
    table = (out / "sweep.txt").read_text()
    assert "pixel AUROC" in table and table.count("\n") >= 3


def test_usage_errors_exit_one(dataset, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--features", "x"])  # --model missing
    assert exc.value.code == 1
    root, _ = dataset
    rc = cli.main(["train", "--features", str(root / "features"), "--model", "/tmp/m.smdm",
                   "--epsilon", "-1"])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_data_errors_exit_two(tmp_path, capsys):
    rc = cli.main(["train", "--features", str(tmp_path / "nope"), "--model",
                   str(tmp_path / "m.smdm")])
    assert rc == 2
    assert "data error" in capsys.readouterr().err

    feat = tmp_path / "features" / "train"
    feat.mkdir(parents=True)
    (feat / "bad_layer1.smdt").write_bytes(b"JUNKJUNKJUNKJUNK")
    rc = cli.main(["train", "--features", str(tmp_path / "features"), "--model",
                   str(tmp_path / "m.smdm")] + COMMON)
    assert rc == 2


def test_model_feature_dim_mismatch_exit_two(dataset, trained, tmp_path, capsys):
    feat = tmp_path / "features" / "test"
    feat.mkdir(parents=True)
    wrong = np.zeros((5, 4, 4), dtype=np.float32)  # dim 5 != model dim 8
    write_tensor(TensorFile(wrong.shape, wrong), feat / "z_layer1.smdt")
    rc = cli.main(["score", "--features", str(tmp_path / "features"), "--model", str(trained),
                   "--out", str(tmp_path / "out")] + COMMON)
    assert rc == 2
    assert "dim" in capsys.readouterr().err


def test_config_file_and_flag_precedence(dataset, tmp_path):
    root, _ = dataset
    cfg = tmp_path / "run.cfg"
    cfg.write_text("map_size=4\ninput_size=32\nsigma=1.0\nepochs=2\ntop_k=2\n", encoding="utf-8")
    model = tmp_path / "m.smdm"
    rc = cli.main(["train", "--features", str(root / "features"), "--model", str(model),
                   "--config", str(cfg), "--k", "3"])
    assert rc == 0
    _, _, meta = load_model(model)
    assert meta.top_k == 3


def test_train_reproducible_and_digest_embedded(dataset, tmp_path):
    from som_anomaly.config import RunConfig

    root, _ = dataset
    m1, m2 = tmp_path / "m1.smdm", tmp_path / "m2.smdm"
    for model in (m1, m2):
        rc = cli.main(["train", "--features", str(root / "features"), "--model", str(model)]
                      + COMMON)
        assert rc == 0
    assert m1.read_bytes() == m2.read_bytes()
    _, _, meta = load_model(m1)
    effective = RunConfig(map_size=4, input_size=32, sigma=1.0, epochs=3, top_k=2)
    assert meta.config_digest == effective.digest_bytes()
