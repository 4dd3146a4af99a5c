"""
Parameter containers and gradient machinery.

``LinearModel`` scores with x·w + b. ``MlpModel`` is a feed-forward network
with elu hidden layers, inverted dropout and a linear scalar output; its
forward pass keeps a cache that ``mlp_backward`` turns into exact gradients.
Both expose ``parameters()`` as an ordered list of named arrays, which is the
layout ``OptimizerState`` and the checkpoint files use.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from src.exceptions import DimensionError, NumericalError

logger = logging.getLogger(__name__)

Params = List[Tuple[str, np.ndarray]]


def xavier_init(shape: Tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """
    Glorot uniform draw on [-a, a] with a = sqrt(6 / (fan_in + fan_out)).

    :param shape: Tuple[int, int]: (fan_in, fan_out)
    :param rng: np.random.Generator: Source of randomness
    :return: Array of the given shape
    """
    fan_in, fan_out = shape
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"xavier_init needs positive dimensions, got {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class LinearModel:
    """Linear scorer x·w + b; the bias lives in a one-element array so optimizers can update it in place."""

    def __init__(self, weights: np.ndarray, bias: float = 0.0):
        self.weights = np.array(weights, dtype=float)
        self._bias = np.array([float(bias)])

    def __repr__(self) -> str:
        return f"LinearModel(weights={self.weights!r}, bias={self.bias!r})"

    @property
    def bias(self) -> float:
        return float(self._bias[0])

    @bias.setter
    def bias(self, value: float) -> None:
        self._bias[0] = float(value)

    @classmethod
    def zeros(cls, dim: int) -> "LinearModel":
        return cls(np.zeros(dim), 0.0)

    @classmethod
    def xavier(cls, dim: int, rng: np.random.Generator) -> "LinearModel":
        return cls(xavier_init((dim, 1), rng)[:, 0], 0.0)

    @property
    def dim(self) -> int:
        return len(self.weights)

    def parameters(self) -> Params:
        return [("weights", self.weights), ("bias", self._bias)]

    def load_parameters(self, values: Sequence[np.ndarray]) -> None:
        weights, bias = values
        self.weights[...] = np.asarray(weights, dtype=float).reshape(self.dim)
        self._bias[0] = float(np.asarray(bias).ravel()[0])

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights, [self.bias]])

    @classmethod
    def from_flat(cls, vector: np.ndarray) -> "LinearModel":
        return cls(np.array(vector[:-1], dtype=float), float(vector[-1]))


def linear_score(model: LinearModel, x: np.ndarray):
    """
    Scores one feature vector or a matrix of them.

    :param model: LinearModel: The scorer
    :param x: np.ndarray: Shape (n,) or (m, n)
    :return: A float for a vector, an (m,) array for a matrix
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise DimensionError(f"feature dimension {x.shape[-1]} does not match model dimension {model.dim}")
    score = x @ model.weights + model._bias[0]
    return float(score) if x.ndim == 1 else score


@dataclass
class MlpModel:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    dropout_p: float = 0.5

    def __post_init__(self):
        for upper, lower in zip(self.weights, self.weights[1:]):
            if upper.shape[1] != lower.shape[0]:
                raise DimensionError(f"layer shapes do not chain: {upper.shape} -> {lower.shape}")
        if self.weights[-1].shape[1] != 1:
            raise DimensionError("the output layer must have a single unit")

    @classmethod
    def build(cls, input_dim: int, hidden_sizes: Sequence[int], dropout_p: float,
              rng: np.random.Generator) -> "MlpModel":
        """
        Xavier-initialized network input_dim -> hidden_sizes... -> 1 with zero biases.

        :param input_dim: int: Feature dimension
        :param hidden_sizes: Sequence[int]: Width of every hidden layer
        :param dropout_p: float: Dropout probability on hidden activations
        :param rng: np.random.Generator: Initialization randomness
        :return: A new MlpModel
        """
        dims = [input_dim, *hidden_sizes, 1]
        weights = [xavier_init((a, b), rng) for a, b in zip(dims[:-1], dims[1:])]
        biases = [np.zeros(b) for b in dims[1:]]
        return cls(weights, biases, dropout_p)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def parameters(self) -> Params:
        params = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params.append((f"W{i}", w))
            params.append((f"b{i}", b))
        return params


@dataclass
class ForwardCache:
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    masks: List[np.ndarray | None] = field(default_factory=list)
    single: bool = False


def elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


def mlp_forward(model: MlpModel, x: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None) -> Tuple[np.ndarray | float, ForwardCache]:
    """
    Forward pass with elu hidden layers and inverted dropout when training.

    :param model: MlpModel: The network
    :param x: np.ndarray: Shape (n,) or (m, n)
    :param training: bool: Apply dropout masks on hidden activations
    :param rng: np.random.Generator: Mask randomness, required when training with dropout
    :return: Scores and the cache needed by mlp_backward
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != model.input_dim:
        raise DimensionError(f"feature dimension {h.shape[1]} does not match model dimension {model.input_dim}")
    use_dropout = training and model.dropout_p > 0
    if use_dropout and rng is None:
        raise ValueError("training with dropout needs an rng")

    cache = ForwardCache(single=single)
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        cache.inputs.append(h)
        z = h @ w + b
        cache.pre_activations.append(z)
        if i == last:
            h = z
            break
        h = elu(z)
        mask = None
        if use_dropout:
            keep = 1.0 - model.dropout_p
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        cache.masks.append(mask)
    scores = h[:, 0]
    return (float(scores[0]) if single else scores), cache


def mlp_backward(model: MlpModel, cache: ForwardCache, upstream_grad) -> List[np.ndarray]:
    """
    Reverse-mode gradients of Σ upstream_grad·score with respect to every parameter.

    :param model: MlpModel: The network the cache came from
    :param cache: ForwardCache: Cache of the matching forward call
    :param upstream_grad: float | np.ndarray: dLoss/dScore per row
    :return: Gradients in the order of model.parameters()
    """
    delta = np.atleast_1d(np.asarray(upstream_grad, dtype=float)).reshape(-1, 1)
    grads: List[np.ndarray] = [None] * (2 * len(model.weights))
    for i in reversed(range(len(model.weights))):
        grads[2 * i] = cache.inputs[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i == 0:
            break
        delta = delta @ model.weights[i].T
        mask = cache.masks[i - 1]
        if mask is not None:
            delta = delta * mask
        delta = delta * elu_grad(cache.pre_activations[i - 1])
    return grads


@dataclass
class OptimizerState:
    """
    Adaptive-moment optimizer with decoupled weight decay.

    ``decay`` flags which parameter blocks receive weight decay; biases are
    left undecayed.
    """

    learning_rate: float = 1e-3
    l2: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Params, learning_rate: float = 1e-3, l2: float = 1e-3) -> "OptimizerState":
        return cls(
            learning_rate=learning_rate,
            l2=l2,
            first_moments=[np.zeros_like(p, dtype=float) for _, p in params],
            second_moments=[np.zeros_like(p, dtype=float) for _, p in params],
        )


def is_decayed(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return not (leaf == "bias" or leaf.startswith("b"))


def optimizer_step(state: OptimizerState, params: Params, grads: Sequence[np.ndarray]) -> Params:
    """
    One in-place update of every parameter block.

    :param state: OptimizerState: Moment accumulators, updated in place
    :param params: Params: Named parameter arrays, updated in place
    :param grads: Sequence[np.ndarray]: Gradients aligned with params
    :return: The updated params
    """
    if len(params) != len(grads) or len(params) != len(state.first_moments):
        raise DimensionError("optimizer state, parameters and gradients are not aligned")
    for (name, _), grad in zip(params, grads):
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient in parameter block {name}")

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for k, ((name, value), grad) in enumerate(zip(params, grads)):
        grad = np.asarray(grad, dtype=float).reshape(value.shape)
        m = state.first_moments[k]
        v = state.second_moments[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        if state.l2 and is_decayed(name):
            value -= state.learning_rate * state.l2 * value
        value -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params


def flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])


def unflatten_into(params: Params, vector: np.ndarray) -> None:
    offset = 0
    for _, value in params:
        size = value.size
        value[...] = vector[offset:offset + size].reshape(value.shape)
        offset += size


@dataclass
class TrainedRanker:
    """
    Output of every trainer.

    ``kind`` is ``linear`` or ``mlp`` for a single scorer held in ``ranking``;
    ``rankagg`` rankers carry no scorer of their own and fuse the two
    ``members`` by Borda count.
    """

    kind: str
    method: str
    ranking: LinearModel | MlpModel | None = None
    selection: LinearModel | None = None
    members: Tuple["TrainedRanker", "TrainedRanker"] | None = None
    trace: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def feature_dim(self) -> int:
        if self.kind == "rankagg":
            return self.members[0].feature_dim
        return self.ranking.dim if self.kind == "linear" else self.ranking.input_dim
