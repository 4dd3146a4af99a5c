from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, validator


BASELINE_METHODS = ("naive", "ips", "heckman", "rankagg", "oracle", "cld", "cld_pair")
# cld_n: pointwise CLD on the network ranker; cld_pair_l: pairwise CLD on a linear ranker
BASE_MODEL_METHODS = ("cld", "cld_n", "cld_pair", "cld_pair_l")
METHODS = BASELINE_METHODS + ("cld_n", "cld_pair_l")
SWEEP_AXES = ("k_cutoff", "eta_true", "noise_eps", "n_sessions", "eta_hat")
INTEGER_AXES = ("k_cutoff", "n_sessions")
RankerKind = Literal["linear", "mlp"]


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class CldConfig(BaseModel):
    gamma: float = Field(0.2, gt=-1.0, lt=1.0, description="Error correlation of the selection and relevance equations")
    learning_rate: float = Field(1e-3, gt=0.0)
    l2: float = Field(1e-3, ge=0.0, description="Decoupled weight decay, weights only")
    epochs: int = Field(12, ge=1)
    batch_size: int = Field(256, ge=1)
    seed: int = 0
    hidden_sizes: List[int] = [256, 128, 64]
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    selection_complement: Literal["literal", "bce"] = "literal"
    click_target: Literal["impression", "mean"] = "impression"
    pair_u_ratio: float = Field(1.0, ge=0.0, description="Unselected pairs sampled per epoch, relative to |pairs_s|")
    clamp_low: float = -30.0
    clamp_high: float = 8.0
    cld_ranker: RankerKind = Field("linear", description="Relevance model of pointwise CLD")
    cld_pair_ranker: RankerKind = Field("mlp", description="Relevance model of pairwise CLD")

    _split_hidden = validator("hidden_sizes", pre=True, allow_reuse=True)(_split_list)

    class Config:
        extra = "forbid"


class ExperimentConfig(BaseModel):
    train_path: Optional[str] = Field(None, description="LETOR training file; synthetic data when empty")
    test_path: Optional[str] = Field(None, description="LETOR test file; required with train_path")
    n_train_queries: int = Field(1000, ge=1)
    n_test_queries: int = Field(300, ge=1)
    docs_per_query: int = Field(25, ge=1)
    feature_dim: int = Field(20, ge=1)
    label_noise_sd: float = Field(0.1, ge=0.0)
    data_seed: int = 2022
    k_cutoff: int = Field(5, ge=1)
    eta_true: float = Field(1.0, ge=0.0)
    eta_hat: Optional[float] = Field(None, ge=0.0, description="Propensity severity handed to estimators; eta_true when empty")
    noise_eps: float = Field(0.1, ge=0.0, lt=1.0)
    n_sessions: int = Field(100_000, ge=1)
    policy_fraction: float = Field(0.01, gt=0.0, le=1.0)
    methods: List[str] = list(BASELINE_METHODS)
    seeds: List[int] = [0, 1, 2, 3, 4]
    gamma: float = Field(0.2, gt=-1.0, lt=1.0)
    learning_rate: float = Field(1e-3, gt=0.0)
    l2: float = Field(1e-3, ge=0.0)
    epochs: int = Field(12, ge=1)
    batch_size: int = Field(256, ge=1)
    hidden_sizes: List[int] = [256, 128, 64]
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    selection_complement: Literal["literal", "bce"] = "literal"
    click_target: Literal["impression", "mean"] = "impression"
    pair_u_ratio: float = Field(1.0, ge=0.0)
    cld_ranker: RankerKind = "linear"
    cld_pair_ranker: RankerKind = "mlp"
    graded_eval: bool = Field(False, description="Evaluate NDCG on five-grade labels instead of binary ones")
    record_timing: bool = Field(False, description="Write wall time to results; off keeps reruns byte-identical")

    _split_methods = validator("methods", "seeds", "hidden_sizes", pre=True, allow_reuse=True)(_split_list)

    @validator("methods")
    def known_methods(cls, value):
        unknown = [m for m in value if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}, expected a subset of {list(METHODS)}")
        return value

    @validator("seeds")
    def non_empty_seeds(cls, value):
        if not value:
            raise ValueError("at least one seed is required")
        negative = [seed for seed in value if seed < 0]
        if negative:
            raise ValueError(f"seeds must be non-negative, got {negative}")
        return value

    @validator("test_path", always=True)
    def paired_paths(cls, value, values):
        if bool(values.get("train_path")) != bool(value):
            raise ValueError("train_path and test_path must be given together")
        return value

    @property
    def estimator_eta(self) -> float:
        return self.eta_true if self.eta_hat is None else self.eta_hat

    def cld_config(self, seed: int) -> CldConfig:
        """
        Builds the per-run training hyperparameters.

        :param seed: int: Seed of the run
        :return: The CldConfig for this seed
        """
        return CldConfig(
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            l2=self.l2,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=seed,
            hidden_sizes=self.hidden_sizes,
            dropout=self.dropout,
            selection_complement=self.selection_complement,
            click_target=self.click_target,
            pair_u_ratio=self.pair_u_ratio,
            cld_ranker=self.cld_ranker,
            cld_pair_ranker=self.cld_pair_ranker,
        )

    class Config:
        extra = "forbid"


class Fig2Config(BaseModel):
    n_points: int = Field(1000, gt=1)
    slope: float = 1.0
    intercept: float = 0.5
    noise_sd: float = Field(0.1, ge=0.0)
    list_size: int = Field(10, ge=1)
    k_cutoff: int = Field(5, ge=1)
    eta: float = Field(1.0, ge=0.0)
    seed: int = 0

    class Config:
        extra = "forbid"


class MetricsReport(BaseModel):
    ndcg_at_1: float = Field(..., ge=0.0, le=1.0)
    ndcg_at_3: float = Field(..., ge=0.0, le=1.0)
    map: float = Field(..., ge=0.0, le=1.0)
    n_queries: int
    ndcg_at: Dict[int, float] = {}


class RunResult(BaseModel):
    method: str
    seed: int
    k_cutoff: int
    eta_true: float
    eta_hat: float
    noise: float
    sessions: int
    metrics: Optional[MetricsReport] = None
    seconds: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class GradCheckReport(BaseModel):
    max_rel_error: float = Field(..., ge=0.0)
    worst_index: int


class ScoreRequest(BaseModel):
    features: List[List[float]] = Field(..., min_items=1)


class ScoreResponse(BaseModel):
    scores: List[float]


class RankRequest(ScoreRequest):
    doc_ids: Optional[List[int]] = None


class RankResponse(BaseModel):
    order: List[int]
    scores: List[float]
