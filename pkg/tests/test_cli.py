"""End-to-end CLI tests, invoked in-process through main(argv)."""

import csv
import filecmp
import json

import pytest

from entendre import corpus, forest
from entendre.cli import main


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """One small corpus taken through synth -> ingest once for the module."""
    root = tmp_path_factory.mktemp("cli")
    raw = root / "raw"
    assert main(["synth", "--out", str(raw), "--humans", "30", "--bots", "6",
                 "--seed", "5"]) == 0
    store = root / "store"
    assert main(["ingest", "--posts", str(raw / "posts.ndjson"),
                 "--accounts", str(raw / "accounts.ndjson"),
                 "--out", str(store)]) == 0
    return {"root": root, "raw": raw, "store": store,
            "labels": raw / "labels.csv"}


def _first_post_id(store_dir):
    return next(corpus.CorpusStore(store_dir).iter_posts()).post_id


# -- synth ---------------------------------------------------------------------


def test_synth_json_payload(tmp_path, capsys):
    out = tmp_path / "corpus"
    assert main(["synth", "--out", str(out), "--humans", "8", "--bots", "2",
                 "--seed", "1", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["num_accounts"] == 10
    assert payload["num_bots"] == 2
    assert (out / "posts.ndjson").is_file()
    assert (out / "accounts.ndjson").is_file()
    assert (out / "labels.csv").is_file()


def test_synth_rejects_bad_spec(tmp_path, capsys):
    # Too few bot posts to express the cadence signal.
    assert main(["synth", "--out", str(tmp_path / "x"), "--bot-posts", "3"]) == 1
    assert "error:" in capsys.readouterr().err


# -- ingest --------------------------------------------------------------------


def test_ingest_reports_counts(work, tmp_path, capsys):
    out = tmp_path / "store2"
    assert main(["ingest", "--posts", str(work["raw"] / "posts.ndjson"),
                 "--accounts", str(work["raw"] / "accounts.ndjson"),
                 "--out", str(out), "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["report"]["posts"]["rejected"] == 0
    assert payload["report"]["posts"]["accepted"] > 0
    assert payload["report"]["accounts"]["accepted"] == 36


def test_ingest_is_byte_deterministic(work, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        assert main(["ingest", "--posts", str(work["raw"] / "posts.ndjson"),
                     "--accounts", str(work["raw"] / "accounts.ndjson"),
                     "--out", str(out)]) == 0
    files_a = sorted(p.name for p in a.iterdir())
    files_b = sorted(p.name for p in b.iterdir())
    assert files_a == files_b
    for name in files_a:
        assert filecmp.cmp(a / name, b / name, shallow=False), name


def test_ingest_accepts_multiple_post_files(work, tmp_path, capsys):
    lines = (work["raw"] / "posts.ndjson").read_text(encoding="utf-8").splitlines()
    half = len(lines) // 2
    p1 = tmp_path / "part1.ndjson"
    p2 = tmp_path / "part2.ndjson"
    p1.write_text("\n".join(lines[:half]) + "\n", encoding="utf-8")
    p2.write_text("\n".join(lines[half:]) + "\n", encoding="utf-8")
    out = tmp_path / "joined"
    assert main(["ingest", "--posts", str(p1), "--posts", str(p2),
                 "--accounts", str(work["raw"] / "accounts.ndjson"),
                 "--out", str(out), "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["report"]["posts"]["accepted"] == len(lines)


# -- flag ----------------------------------------------------------------------


def test_flag_csv_schema_and_order(work, tmp_path, capsys):
    out = tmp_path / "verdicts.csv"
    assert main(["flag", "--store", str(work["store"]), "--out", str(out),
                 "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["flagged"] == 6
    assert payload["accounts"] == 36

    with open(out, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["username", "score", "fired_rules", "is_bot"]
    body = rows[1:]
    assert len(body) == 36
    # Sorted by score descending, then username; planted bots lead.
    keys = [(-float(r[1]), r[0]) for r in body]
    assert keys == sorted(keys)
    for r in body[:6]:
        assert r[0].startswith("bot_")
        assert r[1] == "1"
        assert r[2] == "R1;R2;R3;R4"
        assert r[3] == "true"
    assert all(r[3] == "false" for r in body[6:])

    fig = out.with_suffix(".png")
    assert fig.is_file() and fig.stat().st_size > 0
    assert payload["figures"] == [str(fig)]


def test_flag_no_figures(work, tmp_path):
    out = tmp_path / "v.csv"
    assert main(["flag", "--store", str(work["store"]), "--out", str(out),
                 "--no-figures"]) == 0
    assert out.is_file()
    assert not out.with_suffix(".png").exists()


def test_flag_custom_config(work, tmp_path, capsys):
    config_path = tmp_path / "rules.json"
    config_path.write_text(json.dumps({
        "threshold": 1.0,
        "rules": [{"id": "R1"}, {"id": "R3"}],
    }), encoding="utf-8")
    out = tmp_path / "v.csv"
    assert main(["flag", "--store", str(work["store"]), "--out", str(out),
                 "--config", str(config_path), "--json", "--no-figures"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["flagged"] == 6  # bots fire both rules
    with open(out, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["fired_rules"] == "R1;R3"


def test_flag_missing_store(tmp_path, capsys):
    assert main(["flag", "--store", str(tmp_path / "ghost"),
                 "--out", str(tmp_path / "v.csv")]) == 1
    assert "error:" in capsys.readouterr().err


# -- train and score ---------------------------------------------------------------


@pytest.fixture(scope="module")
def model_file(work, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.json"
    code = main(["train", "--store", str(work["store"]),
                 "--labels", str(work["labels"]), "--out", str(out),
                 "--trees", "40", "--max-depth", "10", "--seed", "3"])
    assert code == 0
    return out


def test_train_artifacts(model_file, capsys):
    assert model_file.is_file()
    importances = model_file.with_name("model_importances.csv")
    assert importances.is_file()
    with open(importances, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["feature", "importance"]
    assert len(rows) == 19
    total = sum(float(r[1]) for r in rows[1:])
    assert total == pytest.approx(1.0, abs=1e-3)
    chart = model_file.with_name("model_importances.png")
    assert chart.is_file() and chart.stat().st_size > 0

    bundle = forest.load(model_file)
    assert bundle.normalizer is not None
    assert bundle.train_report is not None


def test_score_text_and_json(work, model_file, capsys):
    assert main(["score", "--model", str(model_file), "--store", str(work["store"]),
                 "--user", "bot_0001", "--user", "human_00003"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    name, pct = lines[0].split()
    assert name == "bot_0001"
    assert float(pct) >= 90.0
    assert float(lines[1].split()[1]) <= 10.0

    assert main(["score", "--model", str(model_file), "--store", str(work["store"]),
                 "--user", "bot_0001", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["model_version"]) == 12
    assert payload["scores"][0]["bot_likelihood"] >= 0.9


def test_score_users_file(work, model_file, tmp_path, capsys):
    users = tmp_path / "users.txt"
    users.write_text("bot_0000\nhuman_00001\n\n", encoding="utf-8")
    assert main(["score", "--model", str(model_file), "--store", str(work["store"]),
                 "--users-file", str(users)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [l.split()[0] for l in lines] == ["bot_0000", "human_00001"]


def test_score_failure_modes(work, model_file, tmp_path, capsys):
    assert main(["score", "--model", str(model_file), "--store", str(work["store"]),
                 "--user", "nobody"]) == 1
    assert "nobody" in capsys.readouterr().err
    assert main(["score", "--model", str(model_file),
                 "--store", str(work["store"])]) == 1
    assert main(["score", "--model", str(tmp_path / "missing.json"),
                 "--store", str(work["store"]), "--user", "bot_0000"]) == 1


# -- tune -----------------------------------------------------------------------


def test_tune_artifacts(work, tmp_path, capsys):
    out_dir = tmp_path / "tune"
    assert main(["tune", "--store", str(work["store"]), "--labels", str(work["labels"]),
                 "--out-dir", str(out_dir), "--budget", "4", "--init", "2",
                 "--folds", "2", "--candidates", "20", "--objective", "oob",
                 "--seed", "1", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert 0.0 <= payload["best_objective"] <= 1.0
    assert set(payload["best_hyperparams"]) == {
        "num_trees", "max_depth", "min_node_size", "mtry_fraction", "sample_fraction"}

    with open(out_dir / "trials.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 5  # header + budget
    assert (out_dir / "trials.json").is_file()
    assert (out_dir / "trace.png").is_file()
    bundle = forest.load(out_dir / "best_model.json")
    assert bundle.forest.hyperparams.to_dict() == payload["best_hyperparams"]


def test_tune_budget_error(work, tmp_path, capsys):
    assert main(["tune", "--store", str(work["store"]), "--labels", str(work["labels"]),
                 "--out-dir", str(tmp_path / "t"), "--budget", "2", "--init", "5"]) == 1
    assert "error:" in capsys.readouterr().err


# -- network -------------------------------------------------------------------------


def test_network_artifacts(work, tmp_path, capsys):
    seed_post = _first_post_id(work["store"])
    out_dir = tmp_path / "net"
    assert main(["network", "--store", str(work["store"]), "--seeds", seed_post,
                 "--depth", "2", "--out-dir", str(out_dir),
                 "--layout-iterations", "50", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["nodes"] >= 1
    doc = json.loads((out_dir / "network.json").read_text(encoding="utf-8"))
    assert len(doc["nodes"]) == payload["nodes"]
    assert doc["truncated"] is False
    assert (out_dir / "network.gexf").read_text(encoding="utf-8").startswith("<?xml")
    assert (out_dir / "network.png").stat().st_size > 0


def test_network_truncation_flag(work, tmp_path, capsys):
    seed_post = _first_post_id(work["store"])
    out_dir = tmp_path / "net2"
    assert main(["network", "--store", str(work["store"]), "--seeds", seed_post,
                 "--depth", "3", "--out-dir", str(out_dir), "--max-nodes", "2",
                 "--layout-iterations", "30", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    if payload["truncated"]:
        assert payload["nodes"] <= 2


def test_network_bad_seed(work, tmp_path, capsys):
    assert main(["network", "--store", str(work["store"]), "--seeds", "no_such_post",
                 "--out-dir", str(tmp_path / "n")]) == 1
    assert "no_such_post" in capsys.readouterr().err


# -- serve ---------------------------------------------------------------------------


def test_serve_requires_model(work, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ENTENDRE_MODEL", raising=False)
    assert main(["serve", "--store", str(work["store"])]) == 1
    assert "model" in capsys.readouterr().err
    assert main(["serve", "--store", str(work["store"]),
                 "--model", str(tmp_path / "absent.json")]) == 1


# -- usage errors ----------------------------------------------------------------------


def test_usage_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["transmogrify"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["flag", "--store", "somewhere"])  # missing --out
    assert exc.value.code == 2
