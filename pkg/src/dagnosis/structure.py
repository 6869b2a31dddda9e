"""Conditional-independence testing and constraint-based DAG discovery.

``pc_learn`` runs the PC algorithm in its order-independent form: edge
removals within one conditioning-set level are batched and applied
between levels, so a concurrent evaluation of the level's tests gives the
same skeleton as the sequential one.  Tier constraints forbid edges from
a later tier into an earlier one; since PC returns an equivalence class,
residual undirected edges are completed deterministically (tier first,
then smallest index first) and any cycle left by conflicting finite-sample
orientations is resolved by dropping the weakest offending edge.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .data import Dataset
from .graph import Dag

__all__ = [
    "CitResult",
    "TierConstraints",
    "fisher_z_test",
    "chi_squared_test",
    "pc_learn",
    "read_tier_file",
]


@dataclass(frozen=True)
class CitResult:
    statistic: float
    p_value: float
    independent: bool

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


@dataclass(frozen=True)
class TierConstraints:
    """Feature index -> tier number; lower tiers may not receive edges
    from higher tiers."""

    tier_of: dict

    def tier(self, i: int) -> int:
        return self.tier_of[i]

    def validate(self, d: int) -> None:
        missing = [i for i in range(d) if i not in self.tier_of]
        if missing:
            raise ValueError(f"features without a tier: {missing}")


def fisher_z_test(ds: Dataset, i: int, j: int, s, significance: float) -> CitResult:
    """Partial-correlation z-test for continuous data.

    The partial correlation of columns ``i`` and ``j`` given ``s`` comes
    from the inverse of their joint correlation matrix; the Fisher
    transform of it is compared against the standard-normal two-sided
    threshold with sqrt(n - |s| - 3) scaling.  A singular conditioning
    covariance is reported and treated as dependence.
    """
    s = sorted(int(x) for x in s)
    if i == j:
        raise ValueError("i and j must differ")
    if i in s or j in s:
        raise ValueError("i and j must not be in the conditioning set")
    n = ds.n
    if n <= len(s) + 3:
        raise ValueError(f"need n > |s| + 3 samples, got n={n}, |s|={len(s)}")
    cols = [i, j, *s]
    with np.errstate(invalid="ignore"):
        corr = np.corrcoef(ds.values[:, cols], rowvar=False)
    return _fisher_z_from_corr(corr, n, len(s), significance)


def _fisher_z_from_corr(
    corr_sub: np.ndarray, n: int, n_cond: int, significance: float
) -> CitResult:
    """Partial correlation from a joint correlation submatrix whose first
    two rows/columns are the tested pair."""
    if not np.all(np.isfinite(corr_sub)):
        warnings.warn("degenerate correlation; treating as dependent")
        return CitResult(statistic=np.inf, p_value=0.0, independent=False)
    try:
        precision = np.linalg.inv(corr_sub)
    except np.linalg.LinAlgError:
        warnings.warn("singular conditioning covariance; treating as dependent")
        return CitResult(statistic=np.inf, p_value=0.0, independent=False)
    r = -precision[0, 1] / np.sqrt(precision[0, 0] * precision[1, 1])
    r = float(np.clip(r, -1.0 + 1e-12, 1.0 - 1e-12))
    z = 0.5 * np.log((1.0 + r) / (1.0 - r))
    statistic = float(np.sqrt(n - n_cond - 3) * abs(z))
    p_value = float(2.0 * stats.norm.sf(statistic))
    return CitResult(statistic=statistic, p_value=p_value, independent=p_value > significance)


def _equal_frequency_bins(x: np.ndarray, bins: int) -> np.ndarray:
    """Quantile-bin a column; tied quantile edges collapse bins."""
    edges = np.quantile(x, [k / bins for k in range(1, bins)])
    edges = np.unique(edges)
    return np.searchsorted(edges, x, side="right")


def chi_squared_test(
    ds: Dataset, i: int, j: int, s, significance: float, bins: int = 4
) -> CitResult:
    """Chi-squared CIT on quantile-binned columns, stratified by ``s``.

    Statistics and degrees of freedom are summed over the strata of the
    conditioning set.  Strata with fewer than ``5 * bins`` rows are
    skipped; if every stratum is skipped the result is reported as
    dependent (undecidable).
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    s = sorted(int(x) for x in s)
    if i in s or j in s:
        raise ValueError("i and j must not be in the conditioning set")
    bi = _equal_frequency_bins(ds.values[:, i], bins)
    bj = _equal_frequency_bins(ds.values[:, j], bins)
    if s:
        cond = np.stack([_equal_frequency_bins(ds.values[:, c], bins) for c in s], axis=1)
        _, strata = np.unique(cond, axis=0, return_inverse=True)
        n_strata = strata.max() + 1
    else:
        strata = np.zeros(ds.n, dtype=int)
        n_strata = 1

    min_rows = 5 * bins
    total_stat = 0.0
    total_dof = 0
    for stratum in range(n_strata):
        rows = strata == stratum
        if rows.sum() < min_rows:
            continue
        table = np.zeros((bins, bins))
        np.add.at(table, (bi[rows], bj[rows]), 1.0)
        table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
        r, c = table.shape
        if r < 2 or c < 2:
            continue
        expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
        total_stat += float(((table - expected) ** 2 / expected).sum())
        total_dof += (r - 1) * (c - 1)

    if total_dof == 0:
        return CitResult(statistic=0.0, p_value=0.0, independent=False)
    p_value = float(stats.chi2.sf(total_stat, total_dof))
    return CitResult(statistic=total_stat, p_value=p_value, independent=p_value > significance)


def read_tier_file(path: str | Path, feature_names) -> TierConstraints:
    """Parse 'feature_name tier_number' lines into tier constraints."""
    path = Path(path)
    names = list(feature_names)
    tier_of: dict[int, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(
                    f"{path}: line {lineno}: expected 'feature_name tier_number', got {line!r}"
                )
            name, tier_text = parts
            if name not in names:
                raise ValueError(f"{path}: line {lineno}: unknown feature {name!r}")
            try:
                tier = int(tier_text)
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: tier must be an integer, got {tier_text!r}"
                ) from None
            idx = names.index(name)
            if idx in tier_of:
                raise ValueError(f"{path}: line {lineno}: duplicate tier for {name!r}")
            tier_of[idx] = tier
    missing = [names[i] for i in range(len(names)) if i not in tier_of]
    if missing:
        raise ValueError(f"{path}: features without a tier: {missing}")
    return TierConstraints(tier_of=tier_of)


def _resolve_cit(cit, ds, significance, bins):
    if callable(cit):
        return lambda i, j, s: cit(ds, i, j, s)
    if cit == "fisher-z":
        # one global correlation matrix; each test inverts a small slice
        with np.errstate(invalid="ignore"):
            corr = np.corrcoef(ds.values, rowvar=False)
        n = ds.n

        def test(i, j, s):
            s = sorted(s)
            if n <= len(s) + 3:
                raise ValueError(f"need n > |s| + 3 samples, got n={n}, |s|={len(s)}")
            cols = [i, j, *s]
            return _fisher_z_from_corr(corr[np.ix_(cols, cols)], n, len(s), significance)

        return test
    if cit in ("chi2", "chi-squared"):
        return lambda i, j, s: chi_squared_test(ds, i, j, s, significance, bins)
    raise ValueError(f"unknown CIT selector {cit!r}")


def pc_learn(
    ds: Dataset,
    cit="fisher-z",
    significance: float = 0.05,
    tiers: TierConstraints | None = None,
    max_cond: int = 3,
    bins: int = 4,
) -> Dag:
    """Learn a DAG with the PC algorithm and deterministic completion.

    ``cit`` is either a selector ("fisher-z" or "chi-squared") or a
    callable ``(ds, i, j, s) -> CitResult``.  ``max_cond`` bounds the
    conditioning-set size during skeleton discovery.
    """
    if max_cond < 0:
        raise ValueError("max_cond must be >= 0")
    d = ds.d
    if tiers is not None:
        tiers.validate(d)
    tier = (lambda i: tiers.tier(i)) if tiers is not None else (lambda i: 0)
    test = _resolve_cit(cit, ds, significance, bins)

    adj: dict[int, set[int]] = {i: set(range(d)) - {i} for i in range(d)}
    sepset: dict[tuple[int, int], frozenset[int]] = {}
    edge_stat: dict[tuple[int, int], float] = {}

    for level in range(max_cond + 1):
        frozen = {i: sorted(adj[i]) for i in range(d)}
        removals: list[tuple[int, int, frozenset[int]]] = []
        any_candidates = False
        for i in range(d):
            for j in frozen[i]:
                if j <= i or j not in adj[i]:
                    continue
                separated = False
                # at level 0 both directions run the same marginal test
                sides = ((i, j),) if level == 0 else ((i, j), (j, i))
                for a, b in sides:
                    pool = [k for k in frozen[a] if k != b]
                    if len(pool) < level:
                        continue
                    any_candidates = True
                    for s in itertools.combinations(pool, level):
                        result = test(a, b, s)
                        if level == 0 and (i, j) not in edge_stat:
                            edge_stat[(i, j)] = abs(result.statistic)
                        if result.independent:
                            removals.append((i, j, frozenset(s)))
                            separated = True
                            break
                    if separated:
                        break
                if separated:
                    continue
        for i, j, s in removals:
            adj[i].discard(j)
            adj[j].discard(i)
            sepset[(i, j)] = s
        if not any_candidates:
            break

    return _orient(d, adj, sepset, edge_stat, tier)


def _orient(d, adj, sepset, edge_stat, tier) -> Dag:
    undirected = {(i, j) for i in range(d) for j in adj[i] if i < j}
    directed: set[tuple[int, int]] = set()

    def is_undirected(a, b):
        return (min(a, b), max(a, b)) in undirected

    def orient(a, b):
        """Make a -> b if the pair is still undirected and tiers allow it."""
        if tier(a) > tier(b):
            return
        pair = (min(a, b), max(a, b))
        if pair in undirected:
            undirected.discard(pair)
            directed.add((a, b))

    # tier-forced orientations: cross-tier edges always point forward
    for i, j in sorted(undirected):
        if tier(i) < tier(j):
            orient(i, j)
        elif tier(j) < tier(i):
            orient(j, i)

    # v-structures from separating sets
    skeleton = {i: set(adj[i]) for i in range(d)}
    for k in range(d):
        for i, j in itertools.combinations(sorted(skeleton[k]), 2):
            if j in skeleton[i]:
                continue
            if k not in sepset.get((min(i, j), max(i, j)), frozenset()):
                orient(i, k)
                orient(j, k)

    # Meek rules R1-R3 to a fixpoint
    changed = True
    while changed:
        changed = False
        before = len(directed)
        for a, b in sorted(undirected):
            for x, y in ((a, b), (b, a)):
                # R1: z -> x, x - y, z and y non-adjacent  =>  x -> y
                if any(
                    (z, x) in directed and y not in skeleton[z]
                    for z in skeleton[x]
                ):
                    orient(x, y)
                    break
                # R2: x -> z -> y and x - y  =>  x -> y
                if any(
                    (x, z) in directed and (z, y) in directed for z in skeleton[x]
                ):
                    orient(x, y)
                    break
                # R3: x - z1 -> y, x - z2 -> y, z1 and z2 non-adjacent  =>  x -> y
                spouses = [
                    z
                    for z in skeleton[x]
                    if is_undirected(x, z) and (z, y) in directed
                ]
                fired = False
                for z1, z2 in itertools.combinations(spouses, 2):
                    if z2 not in skeleton[z1]:
                        orient(x, y)
                        fired = True
                        break
                if fired:
                    break
        changed = len(directed) != before

    # deterministic completion of whatever stayed undirected
    for i, j in sorted(undirected):
        if tier(i) < tier(j) or (tier(i) == tier(j) and i < j):
            directed.add((i, j))
        else:
            directed.add((j, i))

    # finite-sample orientation conflicts can leave a cycle; drop weakest edges
    while True:
        cycle = _find_cycle(d, directed)
        if cycle is None:
            break
        weakest = min(
            cycle, key=lambda e: (edge_stat.get((min(e), max(e)), 0.0), e)
        )
        directed.discard(weakest)
        warnings.warn(
            f"dropping edge {weakest[0]} -> {weakest[1]} to break an orientation cycle"
        )
    return Dag(d, directed)


def _find_cycle(d: int, edges: set[tuple[int, int]]):
    """Return the edges of one directed cycle, or None."""
    children: dict[int, list[int]] = {i: [] for i in range(d)}
    for a, b in sorted(edges):
        children[a].append(b)
    color = [0] * d  # 0 new, 1 on stack, 2 done
    parent_edge: dict[int, tuple[int, int]] = {}

    for start in range(d):
        if color[start] != 0:
            continue
        stack = [(start, iter(children[start]))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 0:
                    color[nxt] = 1
                    parent_edge[nxt] = (node, nxt)
                    stack.append((nxt, iter(children[nxt])))
                    advanced = True
                    break
                if color[nxt] == 1:
                    # walk back from node to nxt collecting the cycle
                    cycle = [(node, nxt)]
                    cur = node
                    while cur != nxt:
                        edge = parent_edge[cur]
                        cycle.append(edge)
                        cur = edge[0]
                    return cycle
            if not advanced:
                color[node] = 2
                stack.pop()
        # clear stack markers for next component
    return None
