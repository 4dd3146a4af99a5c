import numpy as np
from fastapi import APIRouter, Depends, HTTPException, status

from src.exceptions import ValidationError
from src.schemas import RankRequest, RankResponse, ScoreRequest, ScoreResponse
from src.services.estimators import rank_documents, score
from src.services.models import TrainedRanker
from src.services.serving import ranker_store

router = APIRouter(prefix="/ranking", tags=["ranking"])


def _features(rows) -> np.ndarray:
    if len({len(row) for row in rows}) != 1:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail="feature rows differ in length")
    return np.asarray(rows, dtype=float)


@router.post("/score", response_model=ScoreResponse)
async def score_documents(body: ScoreRequest, ranker: TrainedRanker = Depends(ranker_store.get_ranker)):
    """
    Scores feature vectors with the served ranker.

    :param body: ScoreRequest: Feature rows
    :param ranker: TrainedRanker: The served ranker
    :return: One score per row
    """
    features = _features(body.features)
    try:
        scores = np.atleast_1d(score(ranker, features))
    except ValidationError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    return {"scores": scores.tolist()}


@router.post("/rank", response_model=RankResponse)
async def rank(body: RankRequest, ranker: TrainedRanker = Depends(ranker_store.get_ranker)):
    """
    Orders a document list by descending score, ties by doc id.

    RankAgg rankers order by Borda score and report it as the score.

    :param body: RankRequest: Feature rows and optional doc ids
    :param ranker: TrainedRanker: The served ranker
    :return: Doc ids in ranked order and the score of every row
    """
    features = _features(body.features)
    try:
        order, scores = rank_documents(ranker, features, body.doc_ids)
    except ValidationError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    doc_ids = body.doc_ids if body.doc_ids is not None else list(range(len(features)))
    return {"order": [doc_ids[i] for i in order], "scores": np.asarray(scores, dtype=float).tolist()}
