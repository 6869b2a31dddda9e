"""Structural equation models over a DAG: sampling, generation, corruption.

Each node is a function of its parents plus additive standard Gaussian
noise.  Linear nodes compute ``w @ x_par``; MLP nodes compute
``w1 @ sigmoid(w2 @ x_par)`` with a hidden layer of width ``h``.  Weights
are drawn from the equal mixture of U(-2.5, -0.5) and U(0.5, 2.5), so no
weight magnitude falls below 0.5.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset, default_names
from .graph import Dag, topological_order

__all__ = [
    "SemModel",
    "CorruptionSpec",
    "sample_linear_sem",
    "sample_mlp_sem",
    "generate",
    "corrupt_linear",
    "corrupt_mlp",
    "save_sem",
    "load_sem",
]

LINEAR = "linear"
MLP = "mlp"

WEIGHT_LOW = 0.5
WEIGHT_HIGH = 2.5


def _mixture_weights(shape, rng: np.random.Generator) -> np.ndarray:
    """Equal mixture of U(-2.5, -0.5) and U(0.5, 2.5)."""
    magnitude = rng.uniform(WEIGHT_LOW, WEIGHT_HIGH, size=shape)
    sign = np.where(rng.random(size=shape) < 0.5, -1.0, 1.0)
    return sign * magnitude


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class SemModel:
    """Per-node weights attached to a DAG; immutable once built.

    ``linear_weights[i]`` has shape ``(|Par(i)|,)`` for linear models.
    ``mlp_w2[i]`` has shape ``(h, |Par(i)|)`` and ``mlp_w1[i]`` shape
    ``(h,)`` for MLP models.  Root nodes carry ``None`` and emit pure
    noise.
    """

    dag: Dag
    kind: str
    hidden_dim: int = 0
    linear_weights: tuple = ()
    mlp_w1: tuple = ()
    mlp_w2: tuple = ()

    def __post_init__(self):
        if self.kind not in (LINEAR, MLP):
            raise ValueError(f"unknown SEM kind {self.kind!r}")
        parents = self.dag.parent_lists()
        if self.kind == LINEAR:
            if len(self.linear_weights) != self.dag.d:
                raise ValueError("need one weight vector per node")
            for i, w in enumerate(self.linear_weights):
                n_par = len(parents[i])
                if n_par == 0:
                    if w is not None:
                        raise ValueError(f"root node {i} must have no weights")
                elif w.shape != (n_par,):
                    raise ValueError(f"node {i}: weight shape {w.shape} != ({n_par},)")
        else:
            if len(self.mlp_w1) != self.dag.d or len(self.mlp_w2) != self.dag.d:
                raise ValueError("need one weight pair per node")
            for i, (w1, w2) in enumerate(zip(self.mlp_w1, self.mlp_w2)):
                n_par = len(parents[i])
                if n_par == 0:
                    if w1 is not None or w2 is not None:
                        raise ValueError(f"root node {i} must have no weights")
                else:
                    if w2.shape != (self.hidden_dim, n_par):
                        raise ValueError(
                            f"node {i}: w2 shape {w2.shape} != ({self.hidden_dim}, {n_par})"
                        )
                    if w1.shape != (self.hidden_dim,):
                        raise ValueError(
                            f"node {i}: w1 shape {w1.shape} != ({self.hidden_dim},)"
                        )

    @property
    def d(self) -> int:
        return self.dag.d


def sample_linear_sem(g: Dag, rng: np.random.Generator) -> SemModel:
    """Draw a linear SEM: one weight per parent from the uniform mixture."""
    parents = g.parent_lists()
    weights = tuple(
        _mixture_weights(len(par), rng) if par else None for par in parents
    )
    return SemModel(dag=g, kind=LINEAR, linear_weights=weights)


def sample_mlp_sem(g: Dag, h: int, rng: np.random.Generator) -> SemModel:
    """Draw a two-layer MLP SEM with hidden width ``h``."""
    if h < 1:
        raise ValueError(f"hidden width must be >= 1, got {h}")
    parents = g.parent_lists()
    w2 = []
    w1 = []
    for par in parents:
        if par:
            w2.append(_mixture_weights((h, len(par)), rng))
            w1.append(_mixture_weights(h, rng))
        else:
            w2.append(None)
            w1.append(None)
    return SemModel(dag=g, kind=MLP, hidden_dim=h, mlp_w1=tuple(w1), mlp_w2=tuple(w2))


def generate(sem: SemModel, n: int, rng: np.random.Generator) -> Dataset:
    """Sample ``n`` rows by evaluating nodes in topological order.

    All noise is drawn up front as one ``n x d`` standard-normal block, so
    the result depends only on ``(sem, n, rng state)`` and not on any
    evaluation scheduling.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    d = sem.d
    noise = rng.standard_normal((n, d))
    values = np.empty((n, d))
    parents = sem.dag.parent_lists()
    for i in topological_order(sem.dag):
        par = parents[i]
        if not par:
            values[:, i] = noise[:, i]
        elif sem.kind == LINEAR:
            values[:, i] = values[:, par] @ sem.linear_weights[i] + noise[:, i]
        else:
            hidden = _sigmoid(values[:, par] @ sem.mlp_w2[i].T)
            values[:, i] = hidden @ sem.mlp_w1[i] + noise[:, i]
    return Dataset(values, default_names(d))


@dataclass(frozen=True)
class CorruptionSpec:
    """Which nodes to corrupt and how strongly.

    ``shift_mean`` is the mean of the Gaussian added to the targeted
    weights; ``masked_dims`` limits the MLP corruption to that many output
    weights.
    """

    features: tuple[int, ...]
    shift_mean: float
    masked_dims: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(int(f) for f in self.features))
        if not self.features:
            raise ValueError("corruption needs at least one feature")


def corrupt_linear(sem: SemModel, spec: CorruptionSpec) -> SemModel:
    """Shift each corrupted node's weights by ``N(shift_mean * 1, I)``."""
    if sem.kind != LINEAR:
        raise ValueError(f"corrupt_linear needs a linear SEM, got {sem.kind!r}")
    _check_targets(sem, spec)
    rng = np.random.default_rng(spec.seed)
    weights = list(sem.linear_weights)
    for i in spec.features:
        shift = rng.normal(loc=spec.shift_mean, scale=1.0, size=weights[i].shape)
        weights[i] = weights[i] + shift
    return replace(sem, linear_weights=tuple(weights))


def corrupt_mlp(sem: SemModel, spec: CorruptionSpec) -> SemModel:
    """Perturb ``masked_dims`` entries of each corrupted node's last layer.

    The additive term is ``N(shift_mean * 1, I)`` times a random binary
    mask with exactly ``masked_dims`` ones; the first layer is untouched.
    """
    if sem.kind != MLP:
        raise ValueError(f"corrupt_mlp needs an MLP SEM, got {sem.kind!r}")
    _check_targets(sem, spec)
    if not 0 <= spec.masked_dims <= sem.hidden_dim:
        raise ValueError(
            f"masked_dims={spec.masked_dims} outside [0, {sem.hidden_dim}]"
        )
    rng = np.random.default_rng(spec.seed)
    w1 = list(sem.mlp_w1)
    for i in spec.features:
        shift = rng.normal(loc=spec.shift_mean, scale=1.0, size=sem.hidden_dim)
        mask = np.zeros(sem.hidden_dim)
        on = rng.choice(sem.hidden_dim, size=spec.masked_dims, replace=False)
        mask[on] = 1.0
        w1[i] = w1[i] + shift * mask
    return replace(sem, mlp_w1=tuple(w1))


def _check_targets(sem: SemModel, spec: CorruptionSpec) -> None:
    parents = sem.dag.parent_lists()
    for i in spec.features:
        if not 0 <= i < sem.d:
            raise ValueError(f"corrupted feature {i} out of range for d={sem.d}")
        if not parents[i]:
            raise ValueError(
                f"cannot corrupt root node {i}: it has no parent weights"
            )


def _array_or_none(x):
    return None if x is None else np.asarray(x, dtype=float)


def save_sem(sem: SemModel, path: str | Path) -> None:
    """Serialize to JSON: DAG edge list, kind, and per-node weight arrays."""
    payload = {
        "kind": sem.kind,
        "d": sem.d,
        "edges": sorted(list(e) for e in sem.dag.edges),
        "hidden_dim": sem.hidden_dim,
    }
    if sem.kind == LINEAR:
        payload["linear_weights"] = [
            None if w is None else w.tolist() for w in sem.linear_weights
        ]
    else:
        payload["mlp_w1"] = [None if w is None else w.tolist() for w in sem.mlp_w1]
        payload["mlp_w2"] = [None if w is None else w.tolist() for w in sem.mlp_w2]
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_sem(path: str | Path) -> SemModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    dag = Dag(payload["d"], [tuple(e) for e in payload["edges"]])
    if payload["kind"] == LINEAR:
        return SemModel(
            dag=dag,
            kind=LINEAR,
            linear_weights=tuple(_array_or_none(w) for w in payload["linear_weights"]),
        )
    return SemModel(
        dag=dag,
        kind=MLP,
        hidden_dim=payload["hidden_dim"],
        mlp_w1=tuple(_array_or_none(w) for w in payload["mlp_w1"]),
        mlp_w2=tuple(_array_or_none(w) for w in payload["mlp_w2"]),
    )
