import math

import numpy as np
import pytest

import curatornet as cn


@pytest.fixture(scope="module")
def desk():
    data = cn.make_synthetic(users=60, items=150, styles=4, artists=20, dim=8, seed=1)
    catalog = data.catalog()
    split = cn.split_train_test(data.log())
    clusters = cn.build_cluster_model(catalog, k=4, pca_dim=4, restarts=2, seed=1)
    return catalog, split, clusters


def test_catalog_round_trip_through_numpy():
    emb = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]], dtype=np.float32)
    c = cn.Catalog(["a", "b", "c"], emb)
    assert len(c) == 3
    assert c.dim == 2
    assert c.ids == ["a", "b", "c"]
    assert c.index_of("b") == 1
    np.testing.assert_array_equal(c.embeddings, emb)


def test_zero_norm_embedding_is_rejected():
    with pytest.raises(Exception):
        cn.Catalog(["a"], np.zeros((1, 2), dtype=np.float32))


def test_metric_functions():
    assert cn.auc([0.9], [0.95, 0.5, 0.1]) == pytest.approx(2 / 3)
    assert cn.ndcg_at_k([5, 7, 9], [7], 20) == pytest.approx(1 / math.log2(3))
    p, r = cn.precision_recall_at_k(list(range(30)), [2], 20)
    assert p == pytest.approx(0.05)
    assert r == 1.0


def test_corpus_is_valid(desk):
    catalog, split, clusters = desk
    out = cn.build_training_corpus(catalog, split, clusters.labels, train_count=300, valid_count=30, seed=2)
    assert len(out["train"]) == 300
    assert out["violations"] == []
    train = {(tuple(t[0]), t[1], t[2]) for t in out["train"]}
    assert not any((tuple(t[0]), t[1], t[2]) in train for t in out["valid"])


def test_train_evaluate_recommend(desk, tmp_path):
    catalog, split, clusters = desk
    params = cn.train_curatornet(catalog, split, clusters.labels, train_count=400, valid_count=40,
                                 lr=1e-3, epochs=2, seed=3)
    assert params.input_dim == 8
    path = tmp_path / "m.ckpt"
    cn.save_checkpoint(params, str(path))
    assert cn.encode_checkpoint(cn.load_checkpoint(str(path))) == cn.encode_checkpoint(params)

    rec = cn.load_recommender(str(path), catalog)
    assert rec.name == "CuratorNet"
    report = cn.evaluate(rec, split, catalog)
    assert 0.0 <= report["auc"] <= 1.0
    oracle = cn.evaluate(cn.baseline("oracle", catalog), split, catalog)
    assert oracle["auc"] == 1.0

    profile = catalog.ids[:2]
    top = cn.recommend(rec, catalog, profile, k=5)
    assert len(top) == 5
    assert not any(item in profile for item, _ in top)
    scores = [s for _, s in top]
    assert scores == sorted(scores, reverse=True)


def test_profile_permutation_invariance(desk):
    catalog, _, _ = desk
    params = cn.init_params(input_dim=8, seed=4)
    ids = catalog.ids[:4]
    a = cn.embed_profile(params, cn.profile_features(catalog, ids))
    b = cn.embed_profile(params, cn.profile_features(catalog, ids[::-1]))
    np.testing.assert_array_equal(a, b)
    names = cn.init_params(input_dim=8, seed=4).tensors().keys()
    assert all(n.startswith(("tower.", "head.")) for n in names)


def test_paired_t_test_closed_form():
    t = cn.paired_t_test([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    tt = 2 * math.sqrt(3)
    assert t["p_value"] == pytest.approx(2 * (0.5 - tt / (2 * math.sqrt(2 + tt * tt))))
