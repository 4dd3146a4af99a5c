import pytest
from fastapi import HTTPException

from main import app
from src.repository.checkpoints import save_ranker
from src.services.serving import RankerStore, ranker_store


def test_healthchecker(client):
    response = client.get("/api/healthchecker")
    assert response.status_code == 200, response.text
    assert response.json() == {"message": "Serving cld ranker", "feature_dim": 3}


def test_score(client):
    response = client.post("/api/ranking/score", json={"features": [[1.0, 0.0, 0.0], [0.0, 1.0, 2.0]]})
    assert response.status_code == 200, response.text
    assert response.json()["scores"] == pytest.approx([1.25, 0.25])


def test_rank(client):
    response = client.post(
        "/api/ranking/rank",
        json={"features": [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], "doc_ids": [10, 20, 30]},
    )
    assert response.status_code == 200, response.text
    data = response.json()
    assert data["order"] == [20, 10, 30]
    assert data["scores"] == pytest.approx([0.25, 1.25, -0.75])


def test_rank_without_doc_ids(client):
    response = client.post("/api/ranking/rank", json={"features": [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]})
    assert response.status_code == 200, response.text
    assert response.json()["order"] == [1, 0]


def test_dimension_mismatch(client):
    response = client.post("/api/ranking/score", json={"features": [[1.0, 2.0]]})
    assert response.status_code == 400, response.text
    assert "dimension" in response.json()["detail"]


def test_ragged_rows(client):
    response = client.post("/api/ranking/score", json={"features": [[1.0, 2.0, 3.0], [1.0]]})
    assert response.status_code == 400, response.text
    assert response.json()["detail"] == "feature rows differ in length"


def test_doc_ids_length(client):
    response = client.post("/api/ranking/rank", json={"features": [[1.0, 2.0, 3.0]], "doc_ids": [1, 2]})
    assert response.status_code == 400, response.text


def test_empty_request(client):
    response = client.post("/api/ranking/score", json={"features": []})
    assert response.status_code == 422, response.text


def test_missing_checkpoint_answers_503(client, ranker, tmp_path):
    store = RankerStore(str(tmp_path / "missing.ckpt"))
    app.dependency_overrides[ranker_store.get_ranker] = store.get_ranker
    try:
        response = client.get("/api/healthchecker")
    finally:
        app.dependency_overrides[ranker_store.get_ranker] = lambda: ranker
    assert response.status_code == 503, response.text
    assert "missing.ckpt" in response.json()["detail"]


def test_unreadable_checkpoint(tmp_path):
    path = tmp_path / "broken.ckpt"
    path.write_text("not a checkpoint\n", encoding="utf-8")
    with pytest.raises(HTTPException) as e:
        RankerStore(str(path)).get_ranker()
    assert e.value.status_code == 503


def test_store_loads_once(ranker, tmp_path):
    path = tmp_path / "model.ckpt"
    save_ranker(ranker, str(path))
    store = RankerStore(str(path))
    first = store.load()
    path.unlink()
    assert store.get_ranker() is first
    assert first.method == "cld" and first.feature_dim == 3
    store.reset()
    with pytest.raises(HTTPException):
        store.get_ranker()
