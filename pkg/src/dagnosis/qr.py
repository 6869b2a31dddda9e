"""Gradient-boosted regression trees for conditional quantiles.

Trees are grown leaf-wise with exact split search; each boosting stage
fits the pinball-loss gradient and sets leaf values to the empirical
alpha-quantile of the in-leaf residuals, so stage updates never increase
the training loss.  Fitting is deterministic: there is no row or feature
subsampling, and split ties resolve to the first (feature, position) in
scan order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HyperParams",
    "QuantileModel",
    "DEFAULT_HYPERPARAMS",
    "pinball_loss",
    "empirical_quantile",
    "fit_quantile",
    "predict",
    "predict_batch",
    "random_search_cv",
]

MIN_LEAF = 5
MIN_FIT_ROWS = 20

# random-search ranges
LEAVES_RANGE = (10, 50)
DEPTH_RANGE = (3, 20)
ESTIMATORS_RANGE = (50, 300)


@dataclass(frozen=True)
class HyperParams:
    num_leaves: int = 31
    max_depth: int = 6
    n_estimators: int = 100
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.num_leaves < 2:
            raise ValueError("num_leaves must be >= 2")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")


DEFAULT_HYPERPARAMS = HyperParams()


def pinball_loss(alpha: float, y, y_hat):
    """Asymmetric quantile loss; minimized in expectation at the alpha-quantile."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    diff = np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float)
    return np.where(diff > 0, alpha * diff, (alpha - 1.0) * diff)


def empirical_quantile(values: np.ndarray, alpha: float) -> float:
    """k-th smallest with k = ceil(n * alpha), an exact pinball minimizer.

    The tiny slack absorbs float round-up when n * alpha is an exact
    integer.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise ValueError("empty sample")
    k = math.ceil(n * alpha - 1e-9)
    k = min(max(k, 1), n)
    return float(np.partition(values, k - 1)[k - 1])


@dataclass
class _Tree:
    """Flat array representation; feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        depths = np.zeros(len(self.feature), dtype=int)
        out = 0
        for node in range(len(self.feature)):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
            else:
                out = max(out, int(depths[node]))
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            f = self.feature[node]
            if f < 0:
                out[rows] = self.value[node]
            else:
                go_left = X[rows, f] <= self.threshold[node]
                stack.append((int(self.left[node]), rows[go_left]))
                stack.append((int(self.right[node]), rows[~go_left]))
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "_Tree":
        return cls(
            feature=np.asarray(payload["feature"], dtype=np.int32),
            threshold=np.asarray(payload["threshold"], dtype=float),
            left=np.asarray(payload["left"], dtype=np.int32),
            right=np.asarray(payload["right"], dtype=np.int32),
            value=np.asarray(payload["value"], dtype=float),
        )


@dataclass
class QuantileModel:
    """Boosted-tree estimator of the conditional alpha-quantile."""

    alpha: float
    n_features: int
    learning_rate: float
    base_prediction: float
    trees: list = field(default_factory=list)

    def predict(self, x) -> float:
        return predict(self, x)

    def predict_batch(self, X) -> np.ndarray:
        return predict_batch(self, X)

    def staged_predictions(self, X: np.ndarray):
        """Yield predictions after each boosting stage (stage 0 = base)."""
        X = _as_matrix(X, self.n_features)
        pred = np.full(X.shape[0], self.base_prediction)
        yield pred.copy()
        for tree in self.trees:
            pred += self.learning_rate * tree.predict(X)
            yield pred.copy()

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_features": self.n_features,
            "learning_rate": self.learning_rate,
            "base_prediction": self.base_prediction,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "QuantileModel":
        return cls(
            alpha=payload["alpha"],
            n_features=payload["n_features"],
            learning_rate=payload["learning_rate"],
            base_prediction=payload["base_prediction"],
            trees=[_Tree.from_dict(t) for t in payload["trees"]],
        )


def _as_matrix(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, n_features) if n_features else X.reshape(-1, 0)
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} input columns, got {X.shape[1]}")
    return X


class _NodeSplit:
    """Candidate split of one node, ordered by decreasing gain."""

    __slots__ = ("gain", "order", "node", "feature", "threshold", "left_rows", "right_rows")

    def __init__(self, gain, order, node, feature, threshold, left_rows, right_rows):
        self.gain = gain
        self.order = order
        self.node = node
        self.feature = feature
        self.threshold = threshold
        self.left_rows = left_rows
        self.right_rows = right_rows

    def __lt__(self, other):
        if self.gain != other.gain:
            return self.gain > other.gain
        return self.order < other.order


def _best_split(X: np.ndarray, grad: np.ndarray, rows: np.ndarray):
    """Exact variance-reduction split over all features of one node.

    Returns (gain, feature, threshold, left_rows, right_rows) or None.
    """
    m = rows.size
    if m < 2 * MIN_LEAF:
        return None
    Xn = X[rows]
    gn = grad[rows]
    order = np.argsort(Xn, axis=0)
    xs = np.take_along_axis(Xn, order, axis=0)
    prefix = np.cumsum(gn[order], axis=0)
    total = float(gn.sum())
    counts = np.arange(1, m, dtype=float)[:, None]
    left_sum = prefix[:-1]
    gain = left_sum**2 / counts + (total - left_sum) ** 2 / (m - counts)
    valid = xs[1:] != xs[:-1]
    if MIN_LEAF > 1:
        valid &= (counts >= MIN_LEAF) & (m - counts >= MIN_LEAF)
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    pos, feat = flat // gain.shape[1], flat % gain.shape[1]
    best = gain[pos, feat] - total**2 / m
    if not np.isfinite(best) or best <= 1e-12:
        return None
    lo, hi = xs[pos, feat], xs[pos + 1, feat]
    threshold = 0.5 * (lo + hi)
    if not lo <= threshold < hi:
        threshold = lo
    go_left = Xn[:, feat] <= threshold
    return float(best), int(feat), float(threshold), rows[go_left], rows[~go_left]


def _fit_tree(X, grad, residual, alpha, hp: HyperParams) -> tuple[_Tree, dict]:
    """Grow one tree leaf-wise on the gradients; leaves hold residual quantiles."""
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    leaf_rows = {0: np.arange(X.shape[0])}
    depth = {0: 0}
    counter = 0
    heap: list[_NodeSplit] = []

    def consider(node: int):
        nonlocal counter
        if depth[node] >= hp.max_depth:
            return
        found = _best_split(X, grad, leaf_rows[node])
        if found is not None:
            gain, feat, thr, lrows, rrows = found
            counter += 1
            heapq.heappush(heap, _NodeSplit(gain, counter, node, feat, thr, lrows, rrows))

    if X.shape[1] > 0:
        consider(0)
    n_leaves = 1
    while heap and n_leaves < hp.num_leaves:
        split = heapq.heappop(heap)
        node = split.node
        a, b = len(feature), len(feature) + 1
        feature[node] = split.feature
        threshold[node] = split.threshold
        left[node] = a
        right[node] = b
        feature.extend([-1, -1])
        threshold.extend([0.0, 0.0])
        left.extend([-1, -1])
        right.extend([-1, -1])
        leaf_rows.pop(node)
        leaf_rows[a] = split.left_rows
        leaf_rows[b] = split.right_rows
        depth[a] = depth[b] = depth[node] + 1
        n_leaves += 1
        consider(a)
        consider(b)

    value = np.zeros(len(feature))
    for node, rows in leaf_rows.items():
        value[node] = empirical_quantile(residual[rows], alpha)
    return _Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=value,
    ), leaf_rows


def fit_quantile(inputs, targets, alpha: float, hp: HyperParams | None = None) -> QuantileModel:
    """Fit the boosted conditional alpha-quantile estimator.

    ``inputs`` may have zero columns, in which case the model is the
    constant empirical alpha-quantile of ``targets`` (used for features
    with an empty conditioning set).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    hp = hp or DEFAULT_HYPERPARAMS
    y = np.asarray(targets, dtype=float).ravel()
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size == y.size and y.size else X.reshape(len(y), 0)
    if X.shape[0] != y.size:
        raise ValueError(f"{X.shape[0]} input rows vs {y.size} targets")
    if y.size < MIN_FIT_ROWS:
        raise ValueError(f"need at least {MIN_FIT_ROWS} samples, got {y.size}")

    base = empirical_quantile(y, alpha)
    model = QuantileModel(
        alpha=alpha,
        n_features=X.shape[1],
        learning_rate=hp.learning_rate,
        base_prediction=base,
    )
    if X.shape[1] == 0 or np.all(y == y[0]):
        return model

    pred = np.full(y.size, base)
    for _ in range(hp.n_estimators):
        grad = np.where(y > pred, alpha, alpha - 1.0)
        residual = y - pred
        tree, leaf_rows = _fit_tree(X, grad, residual, alpha, hp)
        for node, rows in leaf_rows.items():
            pred[rows] += hp.learning_rate * tree.value[node]
        model.trees.append(tree)
    return model


def predict(model: QuantileModel, x) -> float:
    """Evaluate one input vector: base plus learning-rate-scaled tree sum."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.n_features:
        raise ValueError(f"expected {model.n_features} inputs, got {x.size}")
    return float(predict_batch(model, x.reshape(1, -1))[0])


def predict_batch(model: QuantileModel, X) -> np.ndarray:
    X = _as_matrix(X, model.n_features)
    out = np.full(X.shape[0], model.base_prediction)
    for tree in model.trees:
        out += model.learning_rate * tree.predict(X)
    return out


def sample_hyperparams(rng: np.random.Generator) -> HyperParams:
    """Draw one candidate from the random-search ranges."""
    lr = float(rng.uniform(0.0, 1.0))
    while lr == 0.0:
        lr = float(rng.uniform(0.0, 1.0))
    return HyperParams(
        num_leaves=int(rng.integers(LEAVES_RANGE[0], LEAVES_RANGE[1] + 1)),
        max_depth=int(rng.integers(DEPTH_RANGE[0], DEPTH_RANGE[1] + 1)),
        n_estimators=int(rng.integers(ESTIMATORS_RANGE[0], ESTIMATORS_RANGE[1] + 1)),
        learning_rate=lr,
    )


def random_search_cv(
    inputs,
    targets,
    alpha: float,
    n_iter: int,
    k_folds: int,
    rng: np.random.Generator,
) -> HyperParams:
    """Pick the candidate with the lowest mean out-of-fold pinball loss."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    X = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = y.size
    if n < k_folds:
        raise ValueError(f"need at least k_folds={k_folds} samples, got {n}")

    candidates = [sample_hyperparams(rng) for _ in range(n_iter)]
    perm = rng.permutation(n)
    folds = np.array_split(perm, k_folds)

    best_hp, best_loss = None, np.inf
    for hp in candidates:
        losses = []
        for fold in folds:
            mask = np.ones(n, dtype=bool)
            mask[fold] = False
            model = fit_quantile(X[mask], y[mask], alpha, hp)
            held = pinball_loss(alpha, y[fold], predict_batch(model, X[fold]))
            losses.append(float(np.mean(held)))
        loss = float(np.mean(losses))
        if loss < best_loss:
            best_hp, best_loss = hp, loss
    return best_hp
