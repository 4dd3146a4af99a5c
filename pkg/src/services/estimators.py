"""
Ranking estimators trained from a click log.

Every trainer takes the click log, the dataset the log was simulated on and a
:class:`~src.schemas.CldConfig`, and returns a :class:`TrainedRanker`:

- ``naive``: network regressed on raw clicks of the selected records.
- ``ips``: network regressed on propensity-reweighted clicks c/ρ.
- ``heckman``: probit selection model on the whole log, then least squares
  of the clicks on the features and the inverse Mills ratio.
- ``rankagg``: Borda fusion of the ``ips`` and ``heckman`` rankings.
- ``oracle``: network trained on expert labels of the displayed documents.
- ``cld``: linear relevance and selection models maximizing the decomposed
  Tobit likelihood; ``cld_n`` fits the same likelihood with the network
  relevance model.
- ``cld_pair``: network relevance model and linear selection model trained on
  preference pairs; ``cld_pair_l`` swaps in a linear relevance model.

Trainers only read the propensities stored on the log; the harness swaps in a
misspecified table before training when it studies misspecification.
"""
import logging
import math
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import optimize

from src.domain.entities import ClickLog, Dataset, PairSet, QueryGroup
from src.exceptions import NumericalError, TrainingError, ValidationError
from src.schemas import CldConfig
from src.services.models import (LinearModel, MlpModel, OptimizerState, Params, TrainedRanker, linear_score,
                                 mlp_backward, mlp_forward, optimizer_step)
from src.services.numerics import inverse_mills, log_Phi, log_sigmoid, sigmoid
from src.services.policy import LoggingPolicy, rank_query

logger = logging.getLogger(__name__)

Scorer = LinearModel | MlpModel


def ips_reweight(c, rho):
    """
    The ips_reweight function divides clicks by their examination propensity.

    :param c: int | np.ndarray: Clicks
    :param rho: float | np.ndarray: Propensities, strictly positive
    :return: c / rho
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise ValidationError("propensities must be positive; unselected records are never reweighted")
    weighted = np.asarray(c, dtype=float) / rho
    return float(weighted) if weighted.ndim == 0 else weighted


def click_targets(log: ClickLog, mode: str = "impression") -> np.ndarray:
    """
    The click_targets function computes c/ρ for every selected record, 0 elsewhere.

    With ``mode="mean"`` every selected record carries the mean of c/ρ over all
    selected impressions of the same document.

    :param log: ClickLog: The click log
    :param mode: str: ``impression`` or ``mean``
    :return: One target per record
    """
    selected = log.selected_mask
    targets = np.zeros(len(log))
    if selected.any():
        targets[selected] = ips_reweight(log.clicked[selected], log.propensity[selected])
    if mode == "impression":
        return targets
    if mode != "mean":
        raise ValueError(f"unknown click target mode {mode!r}")
    _, inverse = np.unique(log.doc_key, return_inverse=True)
    sums = np.bincount(inverse, weights=targets)
    counts = np.bincount(inverse, weights=selected.astype(float))
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return np.where(selected, means[inverse], 0.0)


def _prefixed(model: Scorer, prefix: str) -> Params:
    return [(f"{prefix}.{name}", value) for name, value in model.parameters()]


def _forward(model: Scorer, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None):
    if isinstance(model, LinearModel):
        return linear_score(model, x), x
    return mlp_forward(model, x, training, rng)


def _backward(model: Scorer, cache, upstream: np.ndarray) -> List[np.ndarray]:
    if isinstance(model, LinearModel):
        return [cache.T @ upstream, np.array([upstream.sum()])]
    return mlp_backward(model, cache, upstream)


def _run_epochs(method: str, n_items: int, config: CldConfig, rng: np.random.Generator,
                step: Callable[[np.ndarray], float]) -> List[Tuple[int, float]]:
    trace = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_items)
        total = 0.0
        for start in range(0, n_items, config.batch_size):
            total += step(order[start:start + config.batch_size])
        mean_loss = total / n_items
        if not math.isfinite(mean_loss):
            raise NumericalError(f"{method}: non-finite loss in epoch {epoch}")
        trace.append((epoch, mean_loss))
        logger.info("%s epoch %d/%d: loss %.6f", method, epoch, config.epochs, mean_loss)
    return trace


def _fit_mlp_regression(method: str, features: np.ndarray, keys: np.ndarray, targets: np.ndarray,
                        config: CldConfig) -> TrainedRanker:
    rng = np.random.default_rng(config.seed)
    model = MlpModel.build(features.shape[1], config.hidden_sizes, config.dropout, rng)
    params = _prefixed(model, "ranking")
    state = OptimizerState.for_params(params, config.learning_rate, config.l2)

    def step(batch: np.ndarray) -> float:
        scores, cache = mlp_forward(model, features[keys[batch]], training=True, rng=rng)
        residual = scores - targets[batch]
        optimizer_step(state, params, mlp_backward(model, cache, 2.0 * residual / len(batch)))
        return float(residual @ residual)

    trace = _run_epochs(method, len(keys), config, rng, step)
    return TrainedRanker(kind="mlp", method=method, ranking=model, trace=trace)


def train_naive(log: ClickLog, dataset: Dataset, config: CldConfig) -> TrainedRanker:
    """
    The train_naive function treats clicks of the displayed documents as relevance labels.

    :param log: ClickLog: Click log
    :param dataset: Dataset: Dataset the log refers to
    :param config: CldConfig: Training hyperparameters
    :return: An mlp ranker
    """
    selected = log.d_s
    if len(selected) == 0:
        raise TrainingError("naive: the log has no selected records")
    return _fit_mlp_regression("naive", dataset.flat_features, selected.doc_key,
                               selected.clicked.astype(float), config)


def train_ips(log: ClickLog, dataset: Dataset, config: CldConfig) -> TrainedRanker:
    """
    The train_ips function regresses c/ρ of the selected records.

    :param log: ClickLog: Click log whose selected records carry propensities
    :param dataset: Dataset: Dataset the log refers to
    :param config: CldConfig: Training hyperparameters
    :return: An mlp ranker
    """
    selected = log.d_s
    if len(selected) == 0:
        raise TrainingError("ips: the log has no selected records")
    if not np.all(np.isfinite(selected.propensity) & (selected.propensity > 0)):
        raise TrainingError("ips: selected records without a valid propensity")
    targets = ips_reweight(selected.clicked, selected.propensity)
    return _fit_mlp_regression("ips", dataset.flat_features, selected.doc_key, np.atleast_1d(targets), config)


def _probit_fit(x: np.ndarray, s: np.ndarray, weights: np.ndarray, l2: float) -> Tuple[np.ndarray, float]:
    design = np.hstack([x, np.ones((len(x), 1))])
    total = weights.sum()
    sign = 2.0 * s - 1.0
    penalty = np.ones(design.shape[1])
    penalty[-1] = 0.0

    def objective(theta: np.ndarray):
        z = sign * (design @ theta)
        nll = -(weights @ log_Phi(z)) / total + 0.5 * l2 * (penalty * theta) @ theta
        dz = -weights * sign * inverse_mills(z) / total
        return nll, design.T @ dz + l2 * penalty * theta

    result = optimize.minimize(objective, np.zeros(design.shape[1]), jac=True, method="L-BFGS-B")
    if not (np.isfinite(result.fun) and np.all(np.isfinite(result.x))):
        raise NumericalError("heckman: the probit selection stage diverged")
    return result.x, float(result.fun)


def train_heckman(log: ClickLog, dataset: Dataset, config: CldConfig) -> TrainedRanker:
    """
    The train_heckman function runs the two-stage selection correction.

    Stage one fits a probit model of selection on every record. Stage two
    regresses the raw clicks of the selected records on the features, an
    intercept and the inverse Mills ratio of the stage-one index, with a ridge
    of ``l2·|D_s|`` on the Mills coefficient only. The ranker keeps the feature
    coefficients.

    Records of the same document share features and selection, so both stages
    run on per-document aggregates weighted by their number of impressions.

    :param log: ClickLog: Click log
    :param dataset: Dataset: Dataset the log refers to
    :param config: CldConfig: Uses ``l2``
    :return: A linear ranker whose selection model holds the probit weights
    """
    if not log.selected_mask.any():
        raise TrainingError("heckman: the log has no selected records")
    if log.selected_mask.all():
        raise TrainingError("heckman: the log has no unselected records, the selection stage is undefined")
    features = dataset.flat_features

    cells, inverse, counts = np.unique(log.doc_key * 2 + log.selected, return_inverse=True, return_counts=True)
    keys, s = cells // 2, cells % 2
    omega, probit_loss = _probit_fit(features[keys], s.astype(float), counts.astype(float), config.l2)
    logger.info("heckman stage 1: probit loss %.6f", probit_loss)

    sel_cells = s == 1
    clicks = np.bincount(inverse, weights=log.clicked.astype(float))[sel_cells] / counts[sel_cells]
    x = features[keys[sel_cells]]
    weights = counts[sel_cells].astype(float)
    index = x @ omega[:-1] + omega[-1]
    design = np.hstack([x, np.ones((len(x), 1)), inverse_mills(index)[:, None]])
    root = np.sqrt(weights)
    ridge = np.zeros((1, design.shape[1]))
    ridge[0, -1] = math.sqrt(config.l2 * weights.sum())
    coef, *_ = np.linalg.lstsq(np.vstack([design * root[:, None], ridge]),
                               np.concatenate([clicks * root, [0.0]]), rcond=None)
    if not np.all(np.isfinite(coef)):
        raise NumericalError("heckman: the outcome stage produced non-finite coefficients")
    residual = design @ coef - clicks
    outcome_loss = float(weights @ residual ** 2 / weights.sum())
    logger.info("heckman stage 2: mean squared error %.6f, mills coefficient %.4f", outcome_loss, coef[-1])

    d = dataset.feature_dim
    return TrainedRanker(
        kind="linear",
        method="heckman",
        ranking=LinearModel(coef[:d], float(coef[d])),
        selection=LinearModel(omega[:-1], float(omega[-1])),
        trace=[(1, probit_loss), (2, outcome_loss)],
    )


def train_rankagg(log: ClickLog, dataset: Dataset, config: CldConfig) -> TrainedRanker:
    """Trains the ``ips`` and ``heckman`` rankers and fuses them at ranking time."""
    members = (train_ips(log, dataset, config), train_heckman(log, dataset, config))
    return TrainedRanker(kind="rankagg", method="rankagg", members=members)


def _positions(scores: np.ndarray, doc_ids: np.ndarray) -> np.ndarray:
    order = np.lexsort((doc_ids, -scores))
    positions = np.empty(len(order), dtype=np.int64)
    positions[order] = np.arange(1, len(order) + 1)
    return positions


def borda_scores(scores_a: np.ndarray, scores_b: np.ndarray, doc_ids: np.ndarray) -> np.ndarray:
    n = len(doc_ids)
    return (n - _positions(scores_a, doc_ids) + 1) + (n - _positions(scores_b, doc_ids) + 1)


def rank_agg(ranker_a: TrainedRanker, ranker_b: TrainedRanker, query_group: QueryGroup) -> np.ndarray:
    """
    The rank_agg function fuses two rankings of a query by Borda count.

    Each document scores K - position + 1 in each ranking; ties of the summed
    score are broken by ``ranker_a``'s score, then by doc id.

    :param ranker_a: TrainedRanker: First ranker, also the tie breaker
    :param ranker_b: TrainedRanker: Second ranker
    :param query_group: QueryGroup: Query to rank
    :return: Document indices in fused order
    """
    scores_a = score(ranker_a, query_group.features)
    scores_b = score(ranker_b, query_group.features)
    borda = borda_scores(scores_a, scores_b, query_group.doc_ids)
    return np.lexsort((query_group.doc_ids, -scores_a, -borda))


def tobit_record_terms(relevance: np.ndarray, index: np.ndarray, selected: np.ndarray, targets: np.ndarray,
                       gamma: float, clamp_low: float = -30.0,
                       clamp_high: float = 8.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-record negative log-likelihood of the decomposed Tobit model from precomputed scores.

    For a selected record with residual e = t - f_β the loss is
    e² - log Φ((f_ω + γe)/√(1-γ²)); for an unselected record it is
    -log Φ(-f_ω). Φ arguments are clamped to [clamp_low, clamp_high] and the
    clamped part passes no gradient.

    :param relevance: np.ndarray: Relevance scores f_β, one per record
    :param index: np.ndarray: Selection scores f_ω, one per record
    :param selected: np.ndarray: Selection flags
    :param targets: np.ndarray: c/ρ of selected records, ignored elsewhere
    :param gamma: float: Error correlation, |gamma| < 1
    :param clamp_low: float: Lower clamp of the Φ argument
    :param clamp_high: float: Upper clamp of the Φ argument
    :return: Losses, dLoss/df_β and dLoss/df_ω, one entry per record
    """
    if not -1.0 < gamma < 1.0:
        raise ValidationError("gamma must lie strictly between -1 and 1")
    scale = math.sqrt(1.0 - gamma * gamma)
    sel = np.asarray(selected) == 1
    relevance = np.atleast_1d(relevance)
    index = np.atleast_1d(index)
    residual = np.where(sel, np.asarray(targets, dtype=float) - relevance, 0.0)

    raw = np.where(sel, (index + gamma * residual) / scale, -index)
    if not np.all(np.isfinite(raw)):
        raise NumericalError("non-finite argument of the normal cdf")
    arg = np.clip(raw, clamp_low, clamp_high)
    inside = (raw > clamp_low) & (raw < clamp_high)
    mills = np.where(inside, inverse_mills(arg), 0.0)

    losses = np.where(sel, residual * residual, 0.0) - log_Phi(arg)
    d_relevance = np.where(sel, -2.0 * residual + mills * gamma / scale, 0.0)
    d_index = np.where(sel, -mills / scale, mills)
    return losses, d_relevance, d_index


def cld_pointwise_terms(x: np.ndarray, selected: np.ndarray, targets: np.ndarray, ranking: Scorer,
                        selection: LinearModel, gamma: float, clamp_low: float = -30.0,
                        clamp_high: float = 8.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-record Tobit terms of a feature batch, relevance scored with dropout off.

    :param x: np.ndarray: Features, shape (m, n)
    :param selected: np.ndarray: Selection flags
    :param targets: np.ndarray: c/ρ of selected records, ignored elsewhere
    :param ranking: LinearModel | MlpModel: Relevance model β
    :param selection: LinearModel: Selection model ω
    :param gamma: float: Error correlation, |gamma| < 1
    :param clamp_low: float: Lower clamp of the Φ argument
    :param clamp_high: float: Upper clamp of the Φ argument
    :return: Losses, dLoss/d(x'β) and dLoss/d(x'ω), one entry per record
    """
    relevance, _ = _forward(ranking, x)
    return tobit_record_terms(relevance, linear_score(selection, x), selected, targets, gamma,
                              clamp_low, clamp_high)


def cld_pointwise_loss(x: np.ndarray, selected, targets, ranking: Scorer, selection: LinearModel,
                       gamma: float, clamp_low: float = -30.0, clamp_high: float = 8.0) -> Tuple[float, np.ndarray]:
    """
    The cld_pointwise_loss function sums the record losses and their gradient.

    :param x: np.ndarray: One feature vector or a batch of them
    :param selected: int | np.ndarray: Selection flags
    :param targets: float | np.ndarray: c/ρ of selected records
    :param ranking: LinearModel | MlpModel: Relevance model β
    :param selection: LinearModel: Selection model ω
    :param gamma: float: Error correlation
    :param clamp_low: float: Lower clamp of the Φ argument
    :param clamp_high: float: Upper clamp of the Φ argument
    :return: Loss and the flat gradient over the ranking parameters, then (ω weights, ω bias)
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    relevance, cache = _forward(ranking, x)
    losses, d_rel, d_idx = tobit_record_terms(relevance, linear_score(selection, x), np.atleast_1d(selected),
                                              np.atleast_1d(targets), gamma, clamp_low, clamp_high)
    grads = _backward(ranking, cache, d_rel) + _backward(selection, x, d_idx)
    return float(losses.sum()), np.concatenate([np.ravel(grad) for grad in grads])


def _build_ranker(kind: str, dim: int, config: CldConfig, rng: np.random.Generator) -> Scorer:
    if kind == "linear":
        return LinearModel.xavier(dim, rng)
    if kind == "mlp":
        return MlpModel.build(dim, config.hidden_sizes, config.dropout, rng)
    raise ValidationError(f"unknown ranker kind {kind!r}")


def fit_cld_pointwise(features: np.ndarray, selected: np.ndarray, targets: np.ndarray, config: CldConfig,
                      keys: np.ndarray | None = None, method: str = "cld",
                      ranker_kind: str = "linear") -> TrainedRanker:
    """
    Mini-batch maximization of the decomposed likelihood over a record table.

    Batches are drawn from all records; selected records update both models,
    unselected records only the selection model. With ``ranker_kind="mlp"``
    the relevance gradient is backpropagated through the network, dropout on.

    :param features: np.ndarray: Feature rows
    :param selected: np.ndarray: Selection flag per record
    :param targets: np.ndarray: c/ρ per record
    :param config: CldConfig: Training hyperparameters
    :param keys: np.ndarray | None: Feature row of each record, identity when None
    :param method: str: Name used in logs and on the ranker
    :param ranker_kind: str: ``linear`` or ``mlp`` relevance model
    :return: A ranker of that kind carrying the relevance model and ω
    """
    rng = np.random.default_rng(config.seed)
    dim = features.shape[1]
    ranking = _build_ranker(ranker_kind, dim, config, rng)
    selection = LinearModel.xavier(dim, rng)
    params = _prefixed(ranking, "ranking") + _prefixed(selection, "selection")
    state = OptimizerState.for_params(params, config.learning_rate, config.l2)

    def step(batch: np.ndarray) -> float:
        x = features[batch if keys is None else keys[batch]]
        relevance, cache = _forward(ranking, x, training=True, rng=rng)
        losses, d_rel, d_idx = tobit_record_terms(relevance, linear_score(selection, x), selected[batch],
                                                  targets[batch], config.gamma, config.clamp_low,
                                                  config.clamp_high)
        n = len(batch)
        optimizer_step(state, params, _backward(ranking, cache, d_rel / n) + _backward(selection, x, d_idx / n))
        return float(losses.sum())

    trace = _run_epochs(method, len(selected), config, rng, step)
    return TrainedRanker(kind=ranker_kind, method=method, ranking=ranking, selection=selection, trace=trace)


def train_cld(log: ClickLog, dataset: Dataset, config: CldConfig, method: str = "cld",
              ranker_kind: str | None = None) -> TrainedRanker:
    """
    The train_cld function fits the pointwise model on the whole log.

    :param log: ClickLog: Click log with D_s and D_u both non-empty
    :param dataset: Dataset: Dataset the log refers to
    :param config: CldConfig: Training hyperparameters
    :param method: str: Name used in logs and on the ranker
    :param ranker_kind: str | None: Relevance model, ``config.cld_ranker`` when None
    :return: The ranker; its selection model is kept for diagnostics
    """
    if not log.selected_mask.any():
        raise TrainingError(f"{method}: the log has no selected records")
    if log.selected_mask.all():
        raise TrainingError(f"{method}: the log has no unselected records")
    targets = click_targets(log, config.click_target)
    return fit_cld_pointwise(dataset.flat_features, log.selected, targets, config, keys=log.doc_key,
                             method=method, ranker_kind=ranker_kind or config.cld_ranker)


def train_cld_n(log: ClickLog, dataset: Dataset, config: CldConfig) -> TrainedRanker:
    """Pointwise CLD with the network relevance model."""
    return train_cld(log, dataset, config, method="cld_n", ranker_kind="mlp")


def build_pairs(log: ClickLog, targets: np.ndarray | None = None) -> Tuple[PairSet, PairSet]:
    """
    The build_pairs function creates the preference pairs of every session.

    ``pairs_s`` holds ordered pairs of selected records with t_i > t_j.
    ``pairs_u`` holds mixed pairs, a selected record with t_i > 0 against
    every unselected record of its session, and pairs of two unselected
    records oriented by doc index. The unselected set of a query is the same
    in every session, so those pairs are stored once per query with ``count``
    equal to the query's number of sessions.

    :param log: ClickLog: Click log ordered by session
    :param targets: np.ndarray | None: Per-record c/ρ, computed from the log when None
    :return: pairs_s and pairs_u
    """
    if targets is None:
        targets = click_targets(log)
    selected_parts: List[Tuple[np.ndarray, np.ndarray]] = []
    mixed_parts: List[Tuple[np.ndarray, np.ndarray]] = []
    unselected_pairs: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    sessions_per_query: Dict[int, int] = {}

    bounds = log.session_bounds()
    for a, b in zip(bounds[:-1], bounds[1:]):
        records = np.arange(a, b)
        sel = log.selected[a:b] == 1
        t = targets[a:b]
        sel_records, unsel_records = records[sel], records[~sel]
        if len(sel_records) > 1:
            better, worse = np.nonzero(t[sel][:, None] > t[sel][None, :])
            if len(better):
                selected_parts.append((sel_records[better], sel_records[worse]))
        if len(unsel_records) == 0:
            continue
        winners = sel_records[t[sel] > 0]
        if len(winners):
            mixed_parts.append((np.repeat(winners, len(unsel_records)), np.tile(unsel_records, len(winners))))
        query = int(log.query_index[a])
        sessions_per_query[query] = sessions_per_query.get(query, 0) + 1
        if query not in unselected_pairs and len(unsel_records) > 1:
            ordered = unsel_records[np.argsort(log.doc_index[unsel_records], kind="stable")]
            upper, lower = np.triu_indices(len(ordered), k=1)
            unselected_pairs[query] = (ordered[upper], ordered[lower])

    def assemble(parts, s_i: int, s_j: int, counts=None) -> PairSet:
        if not parts:
            return PairSet.empty()
        i = np.concatenate([p[0] for p in parts])
        j = np.concatenate([p[1] for p in parts])
        full = np.ones(len(i), dtype=np.int64)
        return PairSet(i, j, full * s_i, full * s_j, full if counts is None else np.concatenate(counts))

    pairs_s = assemble(selected_parts, 1, 1)
    doubly = list(unselected_pairs.items())
    pairs_u = PairSet.concat([
        assemble(mixed_parts, 1, 0),
        assemble([p for _, p in doubly], 0, 0,
                 [np.full(len(p[0]), sessions_per_query[q], dtype=np.int64) for q, p in doubly]),
    ])
    logger.info("built %d selected pairs and %d unselected pairs (%d distinct)",
                len(pairs_s), pairs_u.total, len(pairs_u))
    return pairs_s, pairs_u


def cld_pair_terms(f_i: np.ndarray, f_j: np.ndarray, g_i: np.ndarray, g_j: np.ndarray, s_i: np.ndarray,
                   s_j: np.ndarray, complement: str = "literal"):
    """
    Per-pair negative objective and its derivatives in the four scores.

    :return: Losses, dLoss/d(f_i - f_j), dLoss/dg_i and dLoss/dg_j
    """
    d = f_i - f_j
    if complement == "literal":
        comp_i, comp_j = log_sigmoid(1.0 - g_i), log_sigmoid(1.0 - g_j)
        dcomp_i, dcomp_j = -sigmoid(g_i - 1.0), -sigmoid(g_j - 1.0)
    elif complement == "bce":
        comp_i, comp_j = log_sigmoid(-g_i), log_sigmoid(-g_j)
        dcomp_i, dcomp_j = -sigmoid(g_i), -sigmoid(g_j)
    else:
        raise ValueError(f"unknown selection complement {complement!r}")

    objective = (s_i * s_j * log_sigmoid(d)
                 + s_i * log_sigmoid(g_i + d) + (1 - s_i) * comp_i
                 + s_j * log_sigmoid(g_j + d) + (1 - s_j) * comp_j)
    d_diff = -(s_i * s_j * sigmoid(-d) + s_i * sigmoid(-(g_i + d)) + s_j * sigmoid(-(g_j + d)))
    d_gi = -(s_i * sigmoid(-(g_i + d)) + (1 - s_i) * dcomp_i)
    d_gj = -(s_j * sigmoid(-(g_j + d)) + (1 - s_j) * dcomp_j)
    return -objective, d_diff, d_gi, d_gj


def cld_pair_objective(x_i: np.ndarray, x_j: np.ndarray, s_i, s_j, ranking: Scorer, selection: LinearModel,
                       complement: str = "literal", training: bool = False,
                       rng: np.random.Generator | None = None) -> Tuple[float, List[np.ndarray]]:
    """
    The cld_pair_objective function evaluates the negative pairwise objective.

    Both-selected pairs carry the preference term and two selection terms,
    mixed pairs one preference-shifted selection term and one complement
    term, unselected pairs only the two complement terms, which do not reach
    the relevance model.

    :param x_i: np.ndarray: Features of the preferred documents, shape (m, n)
    :param x_j: np.ndarray: Features of the other documents, shape (m, n)
    :param s_i: np.ndarray: Selection flags of the preferred documents
    :param s_j: np.ndarray: Selection flags of the other documents
    :param ranking: LinearModel | MlpModel: Relevance model f_β
    :param selection: LinearModel: Selection model f_ω
    :param complement: str: ``literal`` uses log σ(1 - f_ω), ``bce`` uses log σ(-f_ω)
    :param training: bool: Apply dropout in the relevance model
    :param rng: np.random.Generator | None: Dropout randomness
    :return: Summed loss and gradients aligned with ranking then selection parameters
    """
    x_i = np.atleast_2d(np.asarray(x_i, dtype=float))
    x_j = np.atleast_2d(np.asarray(x_j, dtype=float))
    s_i = np.atleast_1d(np.asarray(s_i, dtype=float))
    s_j = np.atleast_1d(np.asarray(s_j, dtype=float))
    m = len(x_i)
    stacked = np.vstack([x_i, x_j])
    f, cache = _forward(ranking, stacked, training, rng)
    g = np.atleast_1d(linear_score(selection, stacked))
    losses, d_diff, d_gi, d_gj = cld_pair_terms(f[:m], f[m:], g[:m], g[m:], s_i, s_j, complement)
    ranking_grads = _backward(ranking, cache, np.concatenate([d_diff, -d_diff]))
    selection_grads = _backward(selection, stacked, np.concatenate([d_gi, d_gj]))
    return float(losses.sum()), ranking_grads + selection_grads


def train_cld_pair(log: ClickLog, dataset: Dataset, config: CldConfig, method: str = "cld_pair",
                   ranker_kind: str | None = None) -> TrainedRanker:
    """
    The train_cld_pair function trains the relevance model on preference pairs.

    Each epoch uses every selected pair plus ``pair_u_ratio·|pairs_s|``
    unselected pairs drawn in proportion to their session counts.

    :param log: ClickLog: Click log
    :param dataset: Dataset: Dataset the log refers to
    :param config: CldConfig: Training hyperparameters
    :param method: str: Name used in logs and on the ranker
    :param ranker_kind: str | None: Relevance model, ``config.cld_pair_ranker`` when None
    :return: A ranker of that kind with a linear selection model
    """
    ranker_kind = ranker_kind or config.cld_pair_ranker
    pairs_s, pairs_u = build_pairs(log, click_targets(log, config.click_target))
    if len(pairs_s) == 0:
        raise TrainingError(f"{method}: no preference pair among selected records; the log needs more clicks")
    rng = np.random.default_rng(config.seed)
    features = dataset.flat_features
    ranking = _build_ranker(ranker_kind, dataset.feature_dim, config, rng)
    selection = LinearModel.xavier(dataset.feature_dim, rng)
    params = _prefixed(ranking, "ranking") + _prefixed(selection, "selection")
    state = OptimizerState.for_params(params, config.learning_rate, config.l2)
    n_unselected = int(round(config.pair_u_ratio * len(pairs_s))) if len(pairs_u) else 0
    weights = pairs_u.count / pairs_u.total if len(pairs_u) else None

    trace = []
    for epoch in range(1, config.epochs + 1):
        drawn = rng.choice(len(pairs_u), size=n_unselected, p=weights) if n_unselected else np.zeros(0, int)
        pairs = PairSet.concat([pairs_s, pairs_u.take(drawn)])
        order = rng.permutation(len(pairs))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = pairs.take(order[start:start + config.batch_size])
            loss, grads = cld_pair_objective(
                features[log.doc_key[batch.i]], features[log.doc_key[batch.j]], batch.s_i, batch.s_j,
                ranking, selection, config.selection_complement, training=True, rng=rng)
            optimizer_step(state, params, [grad / len(batch) for grad in grads])
            total += loss
        mean_loss = total / len(pairs)
        if not math.isfinite(mean_loss):
            raise NumericalError(f"{method}: non-finite loss in epoch {epoch}")
        trace.append((epoch, mean_loss))
        logger.info("%s epoch %d/%d: loss %.6f over %d pairs", method, epoch, config.epochs, mean_loss, len(pairs))
    return TrainedRanker(kind=ranker_kind, method=method, ranking=ranking, selection=selection, trace=trace)


def train_cld_pair_l(log: ClickLog, dataset: Dataset, config: CldConfig) -> TrainedRanker:
    """Pairwise CLD with the linear relevance model."""
    return train_cld_pair(log, dataset, config, method="cld_pair_l", ranker_kind="linear")


def oracle_pairs(dataset: Dataset, policy: LoggingPolicy | None = None,
                 k_cutoff: int | None = None) -> Tuple[np.ndarray, np.ndarray]:
    """Flat feature rows of label pairs among the displayed documents, or all documents without a policy."""
    better, worse = [], []
    for q, group in enumerate(dataset.groups):
        visible = np.arange(group.n_docs)
        if policy is not None and k_cutoff is not None:
            visible = np.flatnonzero(rank_query(policy, group, k_cutoff).selected)
        labels = group.labels[visible]
        bi, wj = np.nonzero(labels[:, None] > labels[None, :])
        better.append(dataset.offsets[q] + visible[bi])
        worse.append(dataset.offsets[q] + visible[wj])
    return np.concatenate(better), np.concatenate(worse)


def train_oracle(dataset: Dataset, config: CldConfig, policy: LoggingPolicy | None = None,
                 k_cutoff: int | None = None) -> TrainedRanker:
    """
    The train_oracle function fits the network to expert labels with a pairwise logistic loss.

    :param dataset: Dataset: Labeled training data
    :param config: CldConfig: Training hyperparameters
    :param policy: LoggingPolicy | None: Restricts pairs to the displayed documents together with k_cutoff
    :param k_cutoff: int | None: Number of displayed documents
    :return: An mlp ranker
    """
    better, worse = oracle_pairs(dataset, policy, k_cutoff)
    if len(better) == 0:
        raise TrainingError("oracle: no labeled preference pair among the displayed documents")
    rng = np.random.default_rng(config.seed)
    features = dataset.flat_features
    model = MlpModel.build(dataset.feature_dim, config.hidden_sizes, config.dropout, rng)
    params = _prefixed(model, "ranking")
    state = OptimizerState.for_params(params, config.learning_rate, config.l2)

    def step(batch: np.ndarray) -> float:
        m = len(batch)
        scores, cache = mlp_forward(model, np.vstack([features[better[batch]], features[worse[batch]]]),
                                    training=True, rng=rng)
        diff = scores[:m] - scores[m:]
        d_diff = -sigmoid(-diff) / m
        optimizer_step(state, params, mlp_backward(model, cache, np.concatenate([d_diff, -d_diff])))
        return float(-log_sigmoid(diff).sum())

    trace = _run_epochs("oracle", len(better), config, rng, step)
    return TrainedRanker(kind="mlp", method="oracle", ranking=model, trace=trace)


def score(ranker: TrainedRanker, x: np.ndarray):
    """
    The score function runs inference, dropout off.

    RankAgg rankers have no pointwise score; for a list of documents they
    return Borda scores of the list.

    :param ranker: TrainedRanker: Trained ranker
    :param x: np.ndarray: One feature vector or a matrix of them
    :return: A float for a vector, an array for a matrix
    """
    x = np.asarray(x, dtype=float)
    if ranker.kind == "rankagg":
        if x.ndim != 2:
            raise ValidationError("a rankagg ranker scores whole document lists")
        a, b = ranker.members
        return borda_scores(score(a, x), score(b, x), np.arange(len(x))).astype(float)
    if x.shape[-1] != ranker.feature_dim:
        raise ValidationError(f"features have dimension {x.shape[-1]}, ranker expects {ranker.feature_dim}")
    if ranker.kind == "linear":
        return linear_score(ranker.ranking, x)
    scores, _ = mlp_forward(ranker.ranking, x, training=False)
    return scores


def rank_documents(ranker: TrainedRanker, features: np.ndarray,
                   doc_ids: Sequence[int] | None = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orders a document list by descending score, ties by doc id.

    :param ranker: TrainedRanker: Trained ranker
    :param features: np.ndarray: Feature matrix of the list
    :param doc_ids: Sequence[int] | None: Ids of the documents, row index when None
    :return: Row indices in ranked order and the scores used
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    doc_ids = np.arange(len(features)) if doc_ids is None else np.asarray(doc_ids)
    if len(doc_ids) != len(features):
        raise ValidationError("doc_ids and features differ in length")
    if ranker.kind == "rankagg":
        a, b = ranker.members
        scores_a = score(a, features)
        borda = borda_scores(scores_a, score(b, features), doc_ids).astype(float)
        return np.lexsort((doc_ids, -scores_a, -borda)), borda
    scores = np.atleast_1d(score(ranker, features))
    return np.lexsort((doc_ids, -scores)), scores


def per_record_losses(method: str, log: ClickLog, dataset: Dataset, config: CldConfig,
                      ranker: TrainedRanker | None = None, click_target: str = "mean") -> np.ndarray:
    """
    Loss contribution of every record, for variance diagnostics.

    ``cld`` evaluates the pointwise likelihood terms on all records; ``ips``
    evaluates the squared error to c/ρ on the selected records. Without a
    ranker both use all-zero models.

    The ``cld`` terms default to the expectation form, where every selected
    impression of a document carries the document's mean c/ρ. This is the
    quantity whose spread stays bounded as propensities shrink. Passing
    ``click_target="impression"`` evaluates the per-impression targets that
    training uses by default; their squared residual carries (c/ρ)² and its
    variance grows like the IPS one.

    :param method: str: ``cld`` or ``ips``
    :param log: ClickLog: Click log
    :param dataset: Dataset: Dataset the log refers to
    :param config: CldConfig: Supplies gamma and the clamps
    :param ranker: TrainedRanker | None: Model to evaluate
    :param click_target: str: ``mean`` or ``impression`` targets of the ``cld`` terms
    :return: One loss per contributing record
    """
    dim = dataset.feature_dim
    if method == "cld":
        ranking = ranker.ranking if ranker is not None else LinearModel.zeros(dim)
        selection = ranker.selection if ranker is not None and ranker.selection is not None \
            else LinearModel.zeros(dim)
        losses, _, _ = cld_pointwise_terms(dataset.flat_features[log.doc_key], log.selected,
                                           click_targets(log, click_target), ranking, selection,
                                           config.gamma, config.clamp_low, config.clamp_high)
        return losses
    if method == "ips":
        selected = log.d_s
        targets = np.atleast_1d(ips_reweight(selected.clicked, selected.propensity))
        predicted = np.zeros(len(selected)) if ranker is None \
            else np.atleast_1d(score(ranker, dataset.flat_features[selected.doc_key]))
        return (targets - predicted) ** 2
    raise ValueError(f"per-record losses are defined for cld and ips, not {method!r}")


def loss_variance(losses: np.ndarray) -> float:
    return float(np.var(np.asarray(losses, dtype=float), ddof=1))


CLICK_TRAINERS: Dict[str, Callable[[ClickLog, Dataset, CldConfig], TrainedRanker]] = {
    "naive": train_naive,
    "ips": train_ips,
    "heckman": train_heckman,
    "rankagg": train_rankagg,
    "cld": train_cld,
    "cld_pair": train_cld_pair,
    "cld_n": train_cld_n,
    "cld_pair_l": train_cld_pair_l,
}


def train_method(method: str, log: ClickLog, dataset: Dataset, config: CldConfig,
                 policy: LoggingPolicy | None = None, k_cutoff: int | None = None) -> TrainedRanker:
    """
    Dispatches to the trainer of ``method``; ``oracle`` ignores the log.

    :param method: str: One of the known method names
    :param log: ClickLog: Click log
    :param dataset: Dataset: Dataset the log refers to
    :param config: CldConfig: Training hyperparameters
    :param policy: LoggingPolicy | None: Logging policy, used by the oracle
    :param k_cutoff: int | None: Display cutoff, used by the oracle
    :return: The trained ranker
    """
    if method == "oracle":
        return train_oracle(dataset, config, policy, k_cutoff)
    if method not in CLICK_TRAINERS:
        raise ValidationError(f"unknown method {method!r}")
    return CLICK_TRAINERS[method](log, dataset, config)
