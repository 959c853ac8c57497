import math

import numpy as np
import pytest

import cbicl


def worked():
    return cbicl.normalize_embedding(np.array([[3.0, 1.0]]))


def test_normalize_worked_row():
    f = worked()
    s = 1 / math.sqrt(2)
    assert np.allclose(f, [[s, -s], [s, s]], atol=1e-12)
    assert np.allclose(cbicl.gram_query(f), np.eye(2), atol=1e-12)


def test_extract_and_predict():
    f = worked()
    alpha = cbicl.extract_concept([f], [0])
    post = cbicl.predict_posterior(alpha, f)
    assert np.allclose(post, [1.0, 0.0], atol=1e-12)
    assert cbicl.predict_label(post) == 0


def test_similarity_copy_is_one():
    rng = np.random.default_rng(3)
    f = cbicl.normalize_embedding(rng.normal(size=(2, 3)))
    fq = cbicl.gram_query(f)
    assert abs(cbicl.similarity_score(fq, fq) - 1.0) <= 1e-12
    ranked = cbicl.select_golden(["a", "b"], [cbicl.normalize_embedding(rng.normal(size=(2, 3))), f], f, 1)
    assert ranked[0][0] == "b"


def test_lemma1_two_labels():
    p = np.array([0.7, 0.3])
    lam = np.linalg.eigvalsh(cbicl.label_covariance(p)).max()
    assert abs(lam - cbicl.lemma1_bound(p)) <= 1e-10


def test_guarantees():
    p = np.array([0.6, 0.3, 0.1])
    assert cbicl.guarantee_lemma2(p, 0.04) == (1, pytest.approx(0.6))
    j, gamma, value = cbicl.guarantee_theorem4(p, 0.065)
    assert j == 2 and value == pytest.approx(0.25)


def test_world_risk_matches_closed_form():
    w = cbicl.generate_world(4, 5, 3, 3)
    demos = [0, 1, 2]
    assert abs(cbicl.enumerate_risk(w, demos, 3) - cbicl.closed_form_risk(w, demos, 3)) <= 1e-9
    b = cbicl.theorem2_bound(w, demos, 3)
    assert b["bound"] >= cbicl.enumerate_risk(w, demos, 3) - 1e-10


def test_errors_are_raised():
    with pytest.raises(cbicl.CbiclError, match="InvalidInput"):
        cbicl.label_covariance(np.array([0.5, 0.6]))


def test_verify_report():
    rep = cbicl.verify(1, seed=7, sweeps=20)
    assert rep["schema"] == "cbicl-report-v1"
    assert rep["pass_rate"] == 1.0
    again = cbicl.verify(1, seed=7, sweeps=20, workers=2)
    assert [c["bound"] for c in rep["checks"]] == [c["bound"] for c in again["checks"]]
