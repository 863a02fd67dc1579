"""Minimal second-order gradient-boosted regression trees.

Each round fits one tree to the gradient/hessian of the loss at the current
raw scores; leaves take the Newton value ``-G / (H + lambda_l2)`` and the raw
score moves by ``learning_rate`` times the tree output. Trees grow
best-first (largest gain first) up to ``2 ** max_depth`` leaves.

Numeric features are split on quantile-bin boundaries with a learned default
direction for ``NaN``. Categorical features either behave as numeric codes
(``codes_as_numeric``) or are split by ordering the categories present at a
node by ``G_i / (H_i + lambda_l2)`` and scanning prefixes (``builtin_sorted``).
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kernels import build_histograms, scan_numeric
from .errors import ConfigError, DegenerateTargetError, FormatError, SchemaError

LOSSES = ("squared_error", "logistic")
CATEGORICAL_MODES = ("codes_as_numeric", "builtin_sorted")
MODEL_VERSION = 1
_BIN_SAMPLE = 200_000


@dataclass(frozen=True)
class GbdtParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 20
    loss: str = "logistic"
    lambda_l2: float = 1.0
    max_bins: int = 255
    categorical_mode: str = "codes_as_numeric"
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ConfigError(f"n_rounds must be >= 1, got {self.n_rounds}")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ConfigError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if not self.lambda_l2 >= 0:
            raise ConfigError(f"lambda_l2 must be >= 0, got {self.lambda_l2}")
        if not 2 <= self.max_bins <= 65535:
            raise ConfigError(f"max_bins must be in [2, 65535], got {self.max_bins}")
        if self.categorical_mode not in CATEGORICAL_MODES:
            raise ConfigError(f"unknown categorical_mode {self.categorical_mode!r}")


@dataclass(frozen=True)
class GradHess:
    g: np.ndarray
    h: np.ndarray


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pointwise_loss(loss: str, y, raw) -> np.ndarray:
    """Per-row loss whose raw-score derivatives are returned by :func:`grad_hess`."""
    y = np.asarray(y, dtype=np.float64)
    raw = np.asarray(raw, dtype=np.float64)
    if loss == "squared_error":
        return 0.5 * (raw - y) ** 2
    if loss == "logistic":
        # log(1 + e^raw) - y * raw, written to avoid overflow
        return np.logaddexp(0.0, raw) - y * raw
    raise ConfigError(f"unknown loss {loss!r}")


def loss_value(loss: str, y, raw) -> float:
    return float(np.mean(pointwise_loss(loss, y, raw)))


def grad_hess(loss: str, y, raw_scores) -> GradHess:
    y = np.asarray(y, dtype=np.float64)
    raw = np.asarray(raw_scores, dtype=np.float64)
    if y.shape != raw.shape:
        raise ConfigError(f"y has shape {y.shape}, raw scores have shape {raw.shape}")
    if loss == "squared_error":
        return GradHess(raw - y, np.ones_like(raw))
    if loss == "logistic":
        p = sigmoid(raw)
        return GradHess(p - y, p * (1.0 - p))
    raise ConfigError(f"unknown loss {loss!r}")


@dataclass(frozen=True)
class SplitRule:
    """``numeric``: ``x <= threshold`` goes left, ``NaN`` follows ``default_left``.

    ``categorical``: codes in ``categories`` go left, codes in
    ``right_categories`` go right, anything else follows ``default_left``.
    """

    feature: int
    kind: str
    default_left: bool
    threshold: float = math.nan
    categories: frozenset = frozenset()
    right_categories: frozenset = frozenset()

    def goes_left(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "numeric":
            left = x <= self.threshold
            if self.default_left:
                left |= np.isnan(x)
            return left
        left = np.isin(x, list(self.categories))
        if self.default_left:
            left |= ~np.isin(x, list(self.right_categories))
        return left


@dataclass
class Node:
    value: float = 0.0
    rule: SplitRule | None = None
    left: int = -1
    right: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.rule is None


@dataclass
class Tree:
    nodes: list[Node]

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            nid, rows = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out[rows] = node.value
                continue
            left = node.rule.goes_left(X[rows, node.rule.feature])
            stack.append((node.left, rows[left]))
            stack.append((node.right, rows[~left]))
        return out

    def depth(self) -> int:
        def walk(nid):
            n = self.nodes[nid]
            return 0 if n.is_leaf else 1 + max(walk(n.left), walk(n.right))
        return walk(0)

    @property
    def n_leaves(self) -> int:
        return sum(n.is_leaf for n in self.nodes)


@dataclass
class BoostedModel:
    base_score: float
    learning_rate: float
    loss: str
    n_features: int
    categorical_features: tuple[int, ...] = ()
    categorical_mode: str = "codes_as_numeric"
    trees: list[Tree] = field(default_factory=list)

    def raw_predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise SchemaError(f"model expects {self.n_features} features, got {X.shape[1]}")
        raw = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            raw += self.learning_rate * tree.predict(X)
        return raw


def predict(model: BoostedModel, X) -> np.ndarray:
    raw = model.raw_predict(X)
    return sigmoid(raw) if model.loss == "logistic" else raw


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise SchemaError(f"expected a 2-D feature matrix, got shape {X.shape}")
    return X


# -- binning ------------------------------------------------------------------


def bin_thresholds(values: np.ndarray, max_bins: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Upper edges of the quantile bins; a value ``x`` falls in bin
    ``searchsorted(edges, x, 'left')`` so ``x <= edges[b]`` means bin ``<= b``."""
    v = values[~np.isnan(values)]
    if rng is not None and len(v) > _BIN_SAMPLE:
        v = rng.choice(v, _BIN_SAMPLE, replace=False)
    u = np.unique(v)
    if len(u) <= 1:
        return np.empty(0)
    if len(u) <= max_bins:
        lo, hi = u[:-1], u[1:]
        mid = lo + (hi - lo) / 2
        return np.where((mid >= lo) & (mid < hi), mid, lo)
    q = np.quantile(v, np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
    edges = np.unique(q)
    return edges[edges < u[-1]]


def apply_bins(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin index per value; ``NaN`` gets the extra index ``len(edges) + 1``."""
    b = np.searchsorted(edges, values, side="left").astype(np.intp)
    b[np.isnan(values)] = len(edges) + 1
    return b


# -- split finding ------------------------------------------------------------


def split_gain(GL, HL, GR, HR, lam):
    G = GL + GR
    H = HL + HR
    with np.errstate(divide="ignore", invalid="ignore"):
        return GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)


def _numeric_split_from_hist(hg, hh, hc, edges, params: GbdtParams, feature: int):
    if len(edges) == 0:
        return None
    gain, b, missing_left = scan_numeric(hg, hh, hc, params.min_samples_leaf, params.lambda_l2)
    if not gain > 0:
        return None
    if hc[-1] == 0:
        n_left = hc[: b + 1].sum()
        default_left = bool(n_left >= hc.sum() - n_left)
    else:
        default_left = bool(missing_left)
    return SplitRule(feature, "numeric", default_left, threshold=float(edges[b])), float(gain), int(b)


def find_split_numeric(values, gh: GradHess, params: GbdtParams, feature: int = 0, edges=None):
    """Best histogram split of one numeric feature over the rows given.

    Returns ``(rule, gain)`` or ``None`` when nothing beats zero gain or the
    node is too small to hold two leaves.
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2 * params.min_samples_leaf:
        return None
    if edges is None:
        edges = bin_thresholds(values, params.max_bins)
    bins = apply_bins(values, edges)
    size = len(edges) + 2
    hg = np.bincount(bins, weights=gh.g, minlength=size)
    hh = np.bincount(bins, weights=gh.h, minlength=size)
    hc = np.bincount(bins, minlength=size)
    found = _numeric_split_from_hist(hg, hh, hc, edges, params, feature)
    return None if found is None else found[:2]


def _categorical_split_from_hist(hg, hh, hc, params: GbdtParams, feature: int):
    codes = np.flatnonzero(hc > 0)
    if len(codes) < 2:
        return None
    lam = params.lambda_l2
    G, H, C = hg[codes], hh[codes], hc[codes]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = G / (H + lam)
    ratio = np.where(np.isnan(ratio), 0.0, ratio)
    order = np.lexsort((codes, ratio))
    cg = np.cumsum(G[order])[:-1]
    ch = np.cumsum(H[order])[:-1]
    cc = np.cumsum(C[order])[:-1]
    Gt, Ht, Ct = G.sum(), H.sum(), C.sum()
    gains = split_gain(cg, ch, Gt - cg, Ht - ch, lam)
    msl = params.min_samples_leaf
    ok = (cc >= msl) & (Ct - cc >= msl) & ~np.isnan(gains)
    gains = np.where(ok, gains, -np.inf)
    j = int(np.argmax(gains))
    gain = float(gains[j])
    if not gain > 0:
        return None
    left = frozenset(int(c) for c in codes[order[: j + 1]])
    right = frozenset(int(c) for c in codes[order[j + 1:]])
    default_left = bool(cc[j] >= Ct - cc[j])
    return SplitRule(feature, "categorical", default_left, categories=left, right_categories=right), gain, left


def find_split_categorical_builtin(codes, gh: GradHess, params: GbdtParams, feature: int = 0):
    """Best category-set split: sort present categories by ``G_i / (H_i + lambda_l2)``
    (ties by code) and take the best of the ``K - 1`` prefixes as the left set."""
    codes = np.asarray(codes, dtype=np.intp)
    if len(codes) < 2 * params.min_samples_leaf:
        return None
    size = int(codes.max()) + 1
    hg = np.bincount(codes, weights=gh.g, minlength=size)
    hh = np.bincount(codes, weights=gh.h, minlength=size)
    hc = np.bincount(codes, minlength=size)
    found = _categorical_split_from_hist(hg, hh, hc, params, feature)
    return None if found is None else found[:2]


# -- tree growth --------------------------------------------------------------


@dataclass
class _Features:
    """Binned training matrix; feature ``j`` owns histogram slots ``offsets[j]:offsets[j+1]``."""

    kinds: list[str]
    bins: np.ndarray  # (n_rows, n_features) int32
    offsets: np.ndarray
    edges: list[np.ndarray | None]

    @property
    def total(self) -> int:
        return int(self.offsets[-1])

    def histograms(self, rows, g, h):
        return build_histograms(self.bins, self.offsets, rows, g, h, self.total)


@dataclass
class _Candidate:
    node_id: int
    rows: np.ndarray
    depth: int
    hist: tuple
    split: tuple | None = None  # (gain, feature index, rule, bin boundary or left-code set)


def _best_split(feats: _Features, hist, params: GbdtParams):
    hg, hh, hc = hist
    best = None
    for j, kind in enumerate(feats.kinds):
        a, b = feats.offsets[j], feats.offsets[j + 1]
        if kind == "numeric":
            found = _numeric_split_from_hist(hg[a:b], hh[a:b], hc[a:b], feats.edges[j], params, j)
        else:
            found = _categorical_split_from_hist(hg[a:b], hh[a:b], hc[a:b], params, j)
        # strict comparison keeps the lowest feature index on ties
        if found is not None and (best is None or found[1] > best[0]):
            best = (found[1], j, found[0], found[2])
    return best


def _partition(feats: _Features, rows, split) -> np.ndarray:
    _, j, rule, aux = split
    b = feats.bins[rows, j]
    if feats.kinds[j] == "numeric":
        missing_bin = len(feats.edges[j]) + 1
        left = b <= aux
        if rule.default_left:
            left |= b == missing_bin
        else:
            left &= b != missing_bin
        return left
    lookup = np.zeros(feats.offsets[j + 1] - feats.offsets[j], dtype=bool)
    lookup[list(aux)] = True
    return lookup[b]


def _grow_tree(feats: _Features, g, h, params: GbdtParams):
    """Grow one tree best-first; returns the tree and ``(rows, value)`` per leaf."""
    lam = params.lambda_l2
    max_leaves = 2 ** min(params.max_depth, 30)
    msl = params.min_samples_leaf

    nodes: list[Node] = []
    heap = []
    leaves: list[_Candidate] = []

    def push(rows, depth, hist):
        cand = _Candidate(len(nodes), rows, depth, hist)
        nodes.append(Node())
        if depth < params.max_depth and len(rows) >= 2 * msl:
            cand.split = _best_split(feats, hist, params)
        if cand.split is not None:
            heapq.heappush(heap, (-cand.split[0], cand.node_id, cand))
        else:
            leaves.append(cand)

    rows = np.arange(len(g))
    push(rows, 0, feats.histograms(rows, g, h))
    n_leaves = 1
    while heap and n_leaves < max_leaves:
        _, _, cand = heapq.heappop(heap)
        _, _, rule, _ = cand.split
        mask = _partition(feats, cand.rows, cand.split)
        left_rows, right_rows = cand.rows[mask], cand.rows[~mask]
        # histogram the smaller child, derive the sibling by subtraction
        small = left_rows if len(left_rows) <= len(right_rows) else right_rows
        hs = feats.histograms(small, g, h)
        hb = tuple(p - c for p, c in zip(cand.hist, hs))
        hl, hr = (hs, hb) if small is left_rows else (hb, hs)
        cand.hist = None
        node = nodes[cand.node_id]
        node.rule = rule
        node.left = len(nodes)
        push(left_rows, cand.depth + 1, hl)
        node.right = len(nodes)
        push(right_rows, cand.depth + 1, hr)
        n_leaves += 1
    leaves.extend(item[2] for item in heap)
    out = []
    for leaf in leaves:
        H = h[leaf.rows].sum() + lam
        value = float(-g[leaf.rows].sum() / H) if H > 0 else 0.0
        nodes[leaf.node_id].value = value
        out.append((leaf.rows, value))
    return Tree(nodes), out


def _prepare_features(X, categorical_features, params: GbdtParams) -> _Features:
    rng = np.random.default_rng(params.seed)
    kinds, cols, sizes, edges_list = [], [], [], []
    for j in range(X.shape[1]):
        col = X[:, j]
        if j in categorical_features and params.categorical_mode == "builtin_sorted":
            if np.isnan(col).any():
                raise ConfigError(f"categorical feature {j} contains NaN; encode missing values as a category")
            codes = col.astype(np.int64)
            if (codes != col).any() or (codes < 0).any():
                raise ConfigError(f"categorical feature {j} must hold non-negative integer codes")
            kinds.append("categorical")
            cols.append(codes)
            sizes.append(int(codes.max()) + 1)
            edges_list.append(None)
        else:
            edges = bin_thresholds(col, params.max_bins, rng)
            kinds.append("numeric")
            cols.append(apply_bins(col, edges))
            sizes.append(len(edges) + 2)
            edges_list.append(edges)
    bins = np.ascontiguousarray(np.column_stack(cols).astype(np.int32))
    offsets = np.r_[0, np.cumsum(sizes)].astype(np.int64)
    return _Features(kinds, bins, offsets, edges_list)


def fit(X, y, params: GbdtParams = GbdtParams(), categorical_features: Sequence[int] = ()) -> BoostedModel:
    """Train a boosted model; deterministic for fixed inputs and ``params``."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != len(y):
        raise SchemaError(f"X has {X.shape[0]} rows, y has {len(y)}")
    if len(y) < 2:
        raise ConfigError("need at least 2 rows to fit")
    cat = tuple(sorted(int(j) for j in categorical_features))
    if params.loss == "logistic":
        p = y.mean()
        if p <= 0 or p >= 1:
            raise DegenerateTargetError("logistic loss needs both classes in the training labels")
        base = math.log(p / (1 - p))
    else:
        base = float(y.mean())
    features = _prepare_features(X, cat, params)
    model = BoostedModel(base, params.learning_rate, params.loss, X.shape[1], cat, params.categorical_mode)
    raw = np.full(len(y), base)
    for _ in range(params.n_rounds):
        gh = grad_hess(params.loss, y, raw)
        tree, leaves = _grow_tree(features, gh.g, gh.h, params)
        for rows, value in leaves:
            raw[rows] += params.learning_rate * value
        model.trees.append(tree)
    return model


# -- persistence --------------------------------------------------------------


def _rule_fields(rule: SplitRule) -> str:
    d = "L" if rule.default_left else "R"
    if rule.kind == "numeric":
        return f"numeric {rule.feature} {d} {rule.threshold.hex()}"
    left = json.dumps(sorted(rule.categories), separators=(",", ":"))
    right = json.dumps(sorted(rule.right_categories), separators=(",", ":"))
    return f"categorical {rule.feature} {d} {left} {right}"


def dumps_model(model: BoostedModel) -> str:
    lines = [
        f"version: {MODEL_VERSION}",
        f"loss: {model.loss}",
        f"base_score: {float(model.base_score).hex()}",
        f"learning_rate: {float(model.learning_rate).hex()}",
        f"n_features: {model.n_features}",
        f"categorical_features: {json.dumps(list(model.categorical_features))}",
        f"categorical_mode: {model.categorical_mode}",
        f"trees: {len(model.trees)}",
    ]
    for t, tree in enumerate(model.trees):
        lines.append(f"tree {t} nodes {len(tree.nodes)}")
        for i, node in enumerate(tree.nodes):
            if node.is_leaf:
                lines.append(f"{i} leaf {float(node.value).hex()}")
            else:
                lines.append(f"{i} split {node.left} {node.right} {_rule_fields(node.rule)}")
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> BoostedModel:
    lines = text.splitlines()
    try:
        head = dict(line.split(": ", 1) for line in lines[:8])
        if head.get("version") != str(MODEL_VERSION):
            raise FormatError(f"unsupported model file version {head.get('version')!r}")
        model = BoostedModel(
            float.fromhex(head["base_score"]), float.fromhex(head["learning_rate"]), head["loss"],
            int(head["n_features"]), tuple(json.loads(head["categorical_features"])),
            head["categorical_mode"])
        pos = 8
        for _ in range(int(head["trees"])):
            _, _, _, n = lines[pos].split()
            pos += 1
            nodes = []
            for line in lines[pos:pos + int(n)]:
                parts = line.split(" ")
                if parts[1] == "leaf":
                    nodes.append(Node(value=float.fromhex(parts[2])))
                    continue
                left, right, kind, feat, d = int(parts[2]), int(parts[3]), parts[4], int(parts[5]), parts[6]
                if kind == "numeric":
                    rule = SplitRule(feat, kind, d == "L", threshold=float.fromhex(parts[7]))
                else:
                    rule = SplitRule(feat, kind, d == "L", categories=frozenset(json.loads(parts[7])),
                                     right_categories=frozenset(json.loads(parts[8])))
                nodes.append(Node(rule=rule, left=left, right=right))
            pos += int(n)
            model.trees.append(Tree(nodes))
    except FormatError:
        raise
    except (KeyError, ValueError, IndexError) as exc:
        raise FormatError(f"corrupt model file: {exc}") from None
    return model


def save_model(model: BoostedModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> BoostedModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
