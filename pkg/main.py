from fastapi import FastAPI, Depends
from fastapi.middleware.cors import CORSMiddleware

from src.conf.config import configure_logging, settings
from src.routes import ranking
from src.services.models import TrainedRanker
from src.services.serving import ranker_store


app = FastAPI(title="cld-ranking")

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(ranking.router, prefix="/api")


@app.on_event("startup")
async def startup():
    """
    Installs logging for the web process.
    """
    configure_logging()


@app.get("/")
def read_root():
    return {"message": "cld-ranking"}


@app.get("/api/healthchecker")
def healthchecker(ranker: TrainedRanker = Depends(ranker_store.get_ranker)) -> dict:
    """
    Creates the '/api/healthchecker' route to check that a ranker is served.
    The ranker comes from the Depends(ranker_store.get_ranker) dependency,
    which answers 503 when the configured checkpoint is missing or unreadable.

    :param ranker: The served ranker.
    :type ranker: TrainedRanker
    :return: A message naming the served method
    :rtype: dict
    """
    return {"message": f"Serving {ranker.method} ranker", "feature_dim": ranker.feature_dim}
