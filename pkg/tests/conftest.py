import numpy as np
import pytest
from fastapi.testclient import TestClient

from main import app
from src.services.models import LinearModel, TrainedRanker
from src.services.serving import ranker_store
from tests.factories import make_dataset, make_log


@pytest.fixture(scope="module")
def dataset():
    return make_dataset()


@pytest.fixture(scope="module")
def click_log(dataset):
    _, log = make_log(dataset)
    return log


@pytest.fixture(scope="module")
def ranker():
    return TrainedRanker(kind="linear", method="cld", ranking=LinearModel(np.array([1.0, -1.0, 0.5]), 0.25))


@pytest.fixture(scope="module")
def client(ranker):
    # Dependency override

    app.dependency_overrides[ranker_store.get_ranker] = lambda: ranker

    yield TestClient(app)

    app.dependency_overrides.clear()
