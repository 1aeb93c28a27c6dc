"""Shared fixtures: one small synthetic corpus, ingested once per session."""

from __future__ import annotations

import pytest

from entendre import corpus, features, forest, synth


@pytest.fixture(scope="session")
def synth_spec():
    return synth.SyntheticCorpusSpec(humans=150, bots=25, seed=7)


@pytest.fixture(scope="session")
def raw_dir(tmp_path_factory, synth_spec):
    out = tmp_path_factory.mktemp("raw")
    synth.generate(synth_spec, out)
    return out


@pytest.fixture(scope="session")
def store(tmp_path_factory, raw_dir):
    out = tmp_path_factory.mktemp("stores") / "store"
    st, _ = corpus.ingest(raw_dir / "posts.ndjson", raw_dir / "accounts.ndjson", out)
    corpus.impute_missing(st)
    return st


@pytest.fixture(scope="session")
def labeled(store, raw_dir):
    return corpus.apply_labels(store, raw_dir / "labels.csv")


@pytest.fixture(scope="session")
def dataset(store, labeled):
    return features.build_dataset(store, labeled)


@pytest.fixture(scope="session")
def model_path(tmp_path_factory, dataset):
    normalizer = features.fit_normalizer(dataset)
    normalized = features.apply_normalizer(dataset, normalizer)
    hp = forest.HyperParams(num_trees=60, max_depth=12)
    model = forest.train(normalized, hp, seed=11)
    rep = forest.TrainReport(
        oob_error=forest.oob_error(model, normalized),
        feature_importances=forest.feature_importance(model),
    )
    path = tmp_path_factory.mktemp("models") / "model.json"
    forest.save(model, path, normalizer=normalizer, train_report=rep)
    return path
