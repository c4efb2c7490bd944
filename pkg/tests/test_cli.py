import json
import logging

import numpy as np
from numpy.testing import assert_allclose
from click.testing import CliRunner

import pytest
from pytest import approx, fixture, mark

import config
from commands import PhaseFailure, phase
from mrfrec import DataError, load_model
from mrfrec.ingest import to_frame
from mrfrec.testkit import SyntheticSpec, make_block_diagonal
from run import cli

_log = logging.getLogger(__name__)


@fixture
def runner():
    return CliRunner()


@fixture
def two_item_file(tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("u1,i1\nu1,i2\nu2,i1\nu3,i2\n", encoding="utf-8")
    return path


@fixture
def block_file(tmp_path):
    mat = make_block_diagonal(SyntheticSpec(n_users=60, n_items=12, density=0.5, blocks=[6, 6], seed=1))
    path = tmp_path / "blocks.csv"
    to_frame(mat)[["user", "item"]].to_csv(path, header=False, index=False)
    return path


def _train(runner, data, model, config_file, *args):
    result = runner.invoke(cli, ["train", str(data), str(model), "--config", str(config_file), *args])
    _log.info("train output: %s", result.output)
    return result


def _two_item_model(runner, tmp_path, two_item_file, config_file, name="two.mrf"):
    model = tmp_path / name
    result = _train(runner, two_item_file, model, config_file, "--lambda", "1", "--alpha", "0", "--no-center")
    assert result.exit_code == 0, result.output
    return model


def test_train_two_item(runner, tmp_path, two_item_file, config_file):
    model = _two_item_model(runner, tmp_path, two_item_file, config_file)
    loaded = load_model(model)
    assert list(loaded.weights.item_ids) == ["i1", "i2"]
    assert_allclose(loaded.weights.toarray(), [[0, 1 / 3], [1 / 3, 0]], atol=1e-14)
    report = json.loads((tmp_path / "two.mrf.report.json").read_text())
    assert set(report["timings"]) == {"preprocess", "solve"}
    assert report["weight_density"] == approx(0.5)


def test_train_deterministic(runner, tmp_path, two_item_file, config_file):
    a = _two_item_model(runner, tmp_path, two_item_file, config_file, "a.mrf")
    b = _two_item_model(runner, tmp_path, two_item_file, config_file, "b.mrf")
    assert a.read_bytes() == b.read_bytes()


def test_train_sparse_matches_dense(runner, tmp_path, config_file):
    rng = np.random.default_rng(4)
    lines = [f"u{u:02d},i{i},{rng.uniform(0.5, 5.0):.6f}" for u in range(40) for i in range(8)]
    data = tmp_path / "valued.csv"
    data.write_text("\n".join(lines) + "\n", encoding="utf-8")

    dense = tmp_path / "dense.mrf"
    sparse = tmp_path / "sparse.mrf"
    assert _train(runner, data, dense, config_file, "--no-binarize", "--lambda", "5").exit_code == 0
    result = _train(
        runner, data, sparse, config_file,
        "--no-binarize", "--lambda", "5", "--solver", "sparse", "--r", "0", "--target-density", "1",
    )
    assert result.exit_code == 0, result.output
    assert "seeds" in result.output
    assert_allclose(load_model(sparse).weights.toarray(), load_model(dense).weights.toarray(), rtol=0, atol=1e-8)


def test_train_invalid_ratio(runner, tmp_path, two_item_file, config_file):
    model = tmp_path / "bad.mrf"
    result = _train(runner, two_item_file, model, config_file, "--r", "1.5")
    assert result.exit_code == 2
    assert "[config]" in result.output
    assert not model.exists()
    assert not (tmp_path / "bad.mrf.report.json").exists()


def test_train_bad_config_file(runner, tmp_path, two_item_file):
    config = tmp_path / "broken.json"
    config.write_text("{not json", encoding="utf-8")
    result = _train(runner, two_item_file, tmp_path / "m.mrf", config)
    assert result.exit_code == 2


def test_train_unknown_config_key(runner, tmp_path, two_item_file):
    config = tmp_path / "extra.json"
    config.write_text('{"lambda": 5, "beta": 1}', encoding="utf-8")
    result = _train(runner, two_item_file, tmp_path / "m.mrf", config)
    assert result.exit_code == 2
    assert "beta" in result.output


def test_train_missing_data(runner, tmp_path, config_file):
    result = _train(runner, tmp_path / "missing.csv", tmp_path / "m.mrf", config_file)
    assert result.exit_code == 3
    assert "[ingest]" in result.output


def test_train_malformed_row(runner, tmp_path, config_file):
    data = tmp_path / "bad.csv"
    data.write_text("u1,i1\nu2\n", encoding="utf-8")
    result = _train(runner, data, tmp_path / "m.mrf", config_file)
    assert result.exit_code == 3
    assert "line 2" in result.output


def test_train_numerical_failure(runner, tmp_path, config_file):
    # a0 is held by every user; centered and unregularized its Gram row is zero
    data = tmp_path / "constant.csv"
    data.write_text("u1,a0\nu1,i1\nu2,a0\nu2,i2\nu3,a0\n", encoding="utf-8")
    result = _train(runner, data, tmp_path / "m.mrf", config_file, "--lambda", "0", "--alpha", "0")
    assert result.exit_code == 4
    assert "[solve]" in result.output
    assert not (tmp_path / "m.mrf").exists()


def test_evaluate_deterministic(runner, tmp_path, block_file, config_file):
    model = tmp_path / "blocks.mrf"
    result = _train(runner, block_file, model, config_file, "--holdout", "--lambda", "5")
    assert result.exit_code == 0, result.output

    outputs = []
    for name in ("r1.csv", "r2.csv"):
        report = tmp_path / name
        result = runner.invoke(
            cli, ["evaluate", str(model), str(block_file), str(report), "--config", str(config_file), "--k", "2", "--k", "5"]
        )
        assert result.exit_code == 0, result.output
        assert "ndcg@2" in result.output
        outputs.append(report.read_bytes())
    assert outputs[0] == outputs[1]
    lines = outputs[0].decode().splitlines()
    assert lines[0] == "metric,k,mean,stderr,n_users"
    assert len(lines) == 5


def test_evaluate_disjoint_items(runner, tmp_path, two_item_file, config_file):
    model = _two_item_model(runner, tmp_path, two_item_file, config_file)
    data = tmp_path / "other.csv"
    data.write_text("".join(f"v{u:02d},x{u % 3}\nv{u:02d},x{(u + 1) % 3}\n" for u in range(30)), encoding="utf-8")
    result = runner.invoke(cli, ["evaluate", str(model), str(data), str(tmp_path / "r.csv"), "--config", str(config_file)])
    assert result.exit_code == 3
    assert "share no items" in result.output
    assert not (tmp_path / "r.csv").exists()


def test_recommend(runner, tmp_path, two_item_file, config_file):
    model = _two_item_model(runner, tmp_path, two_item_file, config_file)
    users = tmp_path / "users.csv"
    users.write_text("u9,i1\nu8,x\n", encoding="utf-8")
    out = tmp_path / "recs.csv"
    result = runner.invoke(cli, ["recommend", str(model), str(users), str(out), "--n", "5", "--config", str(config_file)])
    assert result.exit_code == 0, result.output
    assert out.read_text().splitlines() == [
        "user_id,rank,item_id,score",
        "u8,1,i1,0",
        "u8,2,i2,0",
        "u9,1,i2,0.3333333333",
    ]


def test_recommend_bad_n(runner, tmp_path, two_item_file, config_file):
    model = _two_item_model(runner, tmp_path, two_item_file, config_file)
    result = runner.invoke(
        cli, ["recommend", str(model), str(two_item_file), str(tmp_path / "r.csv"), "--n", "0", "--config", str(config_file)]
    )
    assert result.exit_code == 2


def test_inspect(runner, tmp_path, two_item_file, config_file):
    model = _two_item_model(runner, tmp_path, two_item_file, config_file)
    result = runner.invoke(cli, ["inspect", str(model)])
    assert result.exit_code == 0, result.output
    assert "items: 2" in result.output
    assert "solver: dense" in result.output
    assert "training report:" in result.output


def test_inspect_not_a_model(runner, tmp_path, two_item_file):
    result = runner.invoke(cli, ["inspect", str(two_item_file)])
    assert result.exit_code == 3


@mark.largescale
def test_published_scale(runner, tmp_path, largescale_dir):
    """Each ``<name>.csv`` in the data directory is trained densely and evaluated;
    ``expected.json`` maps names to the reference nDCG@100 (tolerance 0.005)."""
    from pathlib import Path

    root = Path(largescale_dir)
    expected = json.loads((root / "expected.json").read_text())
    config = tmp_path / "config.json"
    config.write_text("{}", encoding="utf-8")
    for name, target in expected.items():
        data = root / f"{name}.csv"
        model = tmp_path / f"{name}.mrf"
        result = _train(runner, data, model, config, "--holdout", "--threads", "4")
        assert result.exit_code == 0, result.output
        report = tmp_path / f"{name}.report.csv"
        result = runner.invoke(cli, ["evaluate", str(model), str(data), str(report), "--config", str(config), "--k", "100"])
        assert result.exit_code == 0, result.output
        lines = dict(
            (line.split(",")[0], float(line.split(",")[2])) for line in report.read_text().splitlines()[1:]
        )
        assert lines["ndcg"] == approx(target, abs=0.005)


def test_phase_label_prefers_error_step():
    error = DataError("empty")
    error.phase = "preprocess"
    with pytest.raises(PhaseFailure, match=r"^\[preprocess\] empty$"):
        with phase("solve"):
            raise error
    with pytest.raises(PhaseFailure, match=r"^\[ingest\]"):
        with phase("ingest"):
            raise DataError("missing")


def test_unwritable_default_config(runner, tmp_path, two_item_file, monkeypatch):
    monkeypatch.setattr(config, "CONFIG_JSON_PATH", tmp_path / "no-such-dir" / "config.json")
    result = runner.invoke(cli, ["train", str(two_item_file), str(tmp_path / "m.mrf")])
    assert result.exit_code == 2
    assert "[config]" in result.output
    assert not (tmp_path / "m.mrf").exists()
