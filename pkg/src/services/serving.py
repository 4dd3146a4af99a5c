import logging
import os
from threading import Lock

from fastapi import HTTPException, status

from src.conf.config import settings
from src.exceptions import CldError
from src.repository.checkpoints import load_ranker
from src.services.models import TrainedRanker


class RankerStore:
    """Loads the served checkpoint once and hands it to the ranking routes."""

    def __init__(self, checkpoint_path: str | None = None):
        self.checkpoint_path = checkpoint_path or settings.checkpoint_path
        self._ranker: TrainedRanker | None = None
        self._lock = Lock()
        self.logger = logging.getLogger(self.__class__.__name__)

    def load(self) -> TrainedRanker:
        """
        Reads the checkpoint on first use.

        :param self: Represent the instance of the class
        :return: The served ranker
        """
        with self._lock:
            if self._ranker is None:
                if not os.path.exists(self.checkpoint_path):
                    raise FileNotFoundError(self.checkpoint_path)
                self._ranker = load_ranker(self.checkpoint_path)
                self.logger.info("serving %s ranker from %s", self._ranker.method, self.checkpoint_path)
            return self._ranker

    def reset(self) -> None:
        with self._lock:
            self._ranker = None

    def get_ranker(self) -> TrainedRanker:
        """
        FastAPI dependency returning the served ranker.

        A missing or unreadable checkpoint answers 503.

        :param self: Represent the instance of the class
        :return: The served ranker
        """
        try:
            return self.load()
        except FileNotFoundError:
            raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
                                detail=f"No checkpoint at {self.checkpoint_path}")
        except CldError as e:
            self.logger.error("cannot load %s: %s", self.checkpoint_path, e)
            raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
                                detail=f"Checkpoint {self.checkpoint_path} is unreadable")


ranker_store = RankerStore()
