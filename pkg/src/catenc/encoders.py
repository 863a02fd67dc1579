"""Target-statistics and weight-of-evidence encoders for one categorical column.

Every encoder is fitted from :class:`CategoryStats` (per-category and global
counts over the training rows only) and produces a :class:`FittedEncoder`
that maps category codes to one real value each. Target-statistics kinds
blend the category fraud rate with the global prior::

    S_i = lam_i * p_fraud_i + (1 - lam_i) * p_prior

and differ only in how ``lam_i`` is obtained. ``woe`` is a regularized log
odds ratio instead. ``catboost_ordered`` additionally produces per-row
training values computed from a random permutation prefix.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DivisionByZeroError, FormatError, ShapeError

KINDS = ("target", "m_estimate", "catboost_ordered", "pozzolo", "james_stein", "woe")
TS_KINDS = ("target", "m_estimate", "catboost_ordered", "pozzolo", "james_stein")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class CategoryStats:
    """Counts over training rows. Index ``i`` of the arrays is category code ``i``."""

    n_i: np.ndarray
    n_iy: np.ndarray
    n_tr: int
    n_y: int

    @property
    def n_categories(self) -> int:
        return len(self.n_i)

    @property
    def present(self) -> np.ndarray:
        return self.n_i > 0

    @property
    def p_prior(self) -> float:
        return self.n_y / self.n_tr

    @property
    def p_fraud(self) -> np.ndarray:
        """Per-category fraud rate; ``nan`` for categories with no rows."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.n_iy / self.n_i

    @property
    def n_i_neg(self) -> np.ndarray:
        return self.n_i - self.n_iy

    @property
    def n_neg(self) -> int:
        return self.n_tr - self.n_y


def compute_stats(column, target, n_categories: int | None = None) -> CategoryStats:
    """Tally counts in a single pass (two ``bincount`` sweeps)."""
    codes = np.asarray(column)
    y = np.asarray(target)
    if codes.shape != y.shape or codes.ndim != 1:
        raise ShapeError(f"column has shape {codes.shape}, target has shape {y.shape}")
    if len(codes) == 0:
        raise ShapeError("cannot compute statistics of an empty column")
    size = int(codes.max()) + 1
    if n_categories is not None:
        size = max(size, n_categories)
    n_i = np.bincount(codes, minlength=size).astype(np.int64)
    n_iy = np.bincount(codes, weights=y, minlength=size).astype(np.int64)
    return CategoryStats(n_i, n_iy, int(len(codes)), int(y.sum()))


@dataclass(frozen=True)
class EncoderConfig:
    kind: str
    k: float = 1.0
    f: float = 1.0
    m: float = 1.0
    pozzolo_variant: str = "lambda1"
    gamma: float = 0.5
    permutation_seed: int = 0
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}; expected one of {KINDS}")
        if not self.f > 0:
            raise ConfigError(f"f must be > 0, got {self.f}")
        if not self.m >= 0:
            raise ConfigError(f"m must be >= 0, got {self.m}")
        if not self.gamma >= 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.pozzolo_variant not in ("lambda1", "lambda2"):
            raise ConfigError(f"unknown pozzolo variant {self.pozzolo_variant!r}")

    def hyperparameters(self) -> dict:
        return {
            "target": {"k": self.k, "f": self.f},
            "m_estimate": {"m": self.m},
            "catboost_ordered": {"m": self.m, "permutation_seed": self.permutation_seed},
            "pozzolo": {"variant": self.pozzolo_variant, "epsilon": self.epsilon},
            "james_stein": {},
            "woe": {"gamma": self.gamma},
        }[self.kind]


@dataclass(frozen=True, eq=False)
class FittedEncoder:
    """Category code -> encoded value, with a fallback for unseen codes.

    ``labels`` (optional) names each code so the encoder can be applied to a
    column coded under a different dictionary; see :func:`transform_labels`.
    ``lam`` holds the per-category blending weights for target-statistics kinds.
    """

    kind: str
    mapping: Mapping[int, float]
    fallback: float
    prior: float
    params: Mapping[str, object] = field(default_factory=dict)
    labels: Mapping[int, str] | None = None
    lam: Mapping[int, float] | None = field(default=None, compare=False)
    stats: CategoryStats | None = field(default=None, compare=False)

    def __eq__(self, other):
        if not isinstance(other, FittedEncoder):
            return NotImplemented
        return (
            self.kind == other.kind
            and dict(self.mapping) == dict(other.mapping)
            and _same_float(self.fallback, other.fallback)
            and _same_float(self.prior, other.prior)
            and dict(self.params) == dict(other.params)
            and (dict(self.labels) if self.labels else None) == (dict(other.labels) if other.labels else None)
        )

    def with_labels(self, labels: Sequence[str]) -> "FittedEncoder":
        return FittedEncoder(self.kind, self.mapping, self.fallback, self.prior, self.params,
                             {c: labels[c] for c in self.mapping}, self.lam, self.stats)

    def lookup_table(self, size: int) -> np.ndarray:
        table = np.full(max(size, 1), self.fallback, dtype=np.float64)
        for code, value in self.mapping.items():
            if code < size:
                table[code] = value
        return table


def _same_float(a: float, b: float) -> bool:
    return a == b or (math.isnan(a) and math.isnan(b))


def _blend(stats: CategoryStats, lam: np.ndarray) -> np.ndarray:
    p = stats.p_fraud
    return lam * p + (1.0 - lam) * stats.p_prior


def _make(kind, stats, values, fallback, params, lam=None) -> FittedEncoder:
    codes = np.flatnonzero(stats.present)
    mapping = {int(c): float(values[c]) for c in codes}
    lam_map = None if lam is None else {int(c): float(lam[c]) for c in codes}
    return FittedEncoder(kind, mapping, float(fallback), stats.p_prior, params, None, lam_map, stats)


def target_lambda(n_i, k: float, f: float):
    """Sigmoid reliability weight, 0.5 at ``n_i == k``."""
    return 1.0 / (1.0 + np.exp(-(np.asarray(n_i, dtype=np.float64) - k) / f))


def fit_target(stats: CategoryStats, k: float = 1.0, f: float = 1.0) -> FittedEncoder:
    if not f > 0:
        raise ConfigError(f"f must be > 0, got {f}")
    lam = target_lambda(stats.n_i, k, f)
    return _make("target", stats, _blend(stats, lam), stats.p_prior, {"k": float(k), "f": float(f)}, lam)


def fit_m_estimate(stats: CategoryStats, m: float = 1.0) -> FittedEncoder:
    if not m >= 0:
        raise ConfigError(f"m must be >= 0, got {m}")
    with np.errstate(invalid="ignore", divide="ignore"):
        values = (stats.n_iy + stats.p_prior * m) / (stats.n_i + m)
        lam = stats.n_i / (stats.n_i + m)
    return _make("m_estimate", stats, values, stats.p_prior, {"m": float(m)}, lam)


def james_stein_lambda(stats: CategoryStats) -> np.ndarray:
    """Ratio of the prior's squared standard error to the total.

    Both variances are Bernoulli squared standard errors ``p(1-p)/n``. When
    both are zero the category rate is taken as is (weight 1).
    """
    p = stats.p_fraud
    pp = stats.p_prior
    with np.errstate(invalid="ignore", divide="ignore"):
        var_i = p * (1.0 - p) / stats.n_i
    var_prior = pp * (1.0 - pp) / stats.n_tr
    denom = var_i + var_prior
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(denom > 0, var_prior / np.where(denom > 0, denom, 1.0), 1.0)
    return lam


def fit_james_stein(stats: CategoryStats) -> FittedEncoder:
    if stats.n_tr < 2:
        raise ConfigError(f"james_stein needs at least 2 training rows, got {stats.n_tr}")
    lam = james_stein_lambda(stats)
    return _make("james_stein", stats, _blend(stats, lam), stats.p_prior, {}, lam)


def pozzolo_lambda(stats: CategoryStats, variant: str = "lambda1", epsilon: float = 1e-9) -> np.ndarray:
    """Frequency-based weights: min-max scaled (``lambda1``) or log scaled (``lambda2``).

    Computed over categories present in the training data; absent codes get
    ``nan``. Results are clamped to [0, 1]; equal frequencies give 0.5.
    """
    present = stats.present
    if not present.any():
        raise ConfigError("pozzolo needs at least one category")
    alpha = stats.n_i / stats.n_tr
    a_min = alpha[present].min()
    a_max = alpha[present].max()
    lam = np.full(stats.n_categories, np.nan)
    if a_max == a_min:
        lam[present] = 0.5
        return lam
    if variant == "lambda1":
        raw = (alpha - a_min) / (a_max - a_min)
    elif variant == "lambda2":
        with np.errstate(invalid="ignore", divide="ignore"):
            raw = np.log(alpha - a_min + epsilon) / np.log(a_max - a_min + epsilon)
    else:
        raise ConfigError(f"unknown pozzolo variant {variant!r}")
    lam[present] = np.clip(raw[present], 0.0, 1.0)
    return lam


def fit_pozzolo(stats: CategoryStats, variant: str = "lambda1", epsilon: float = 1e-9) -> FittedEncoder:
    if stats.n_categories == 0:
        raise ConfigError("pozzolo needs at least one category")
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    lam = pozzolo_lambda(stats, variant, epsilon)
    params = {"variant": variant, "epsilon": float(epsilon)}
    return _make("pozzolo", stats, _blend(stats, lam), stats.p_prior, params, lam)


def woe_value(n_iy, n_i, n_y: int, n_tr: int, gamma: float):
    """Regularized log ratio of the category's share of negatives to its share of positives."""
    n_iy = np.asarray(n_iy, dtype=np.float64)
    n_i_neg = np.asarray(n_i, dtype=np.float64) - n_iy
    n_neg = n_tr - n_y
    share_neg = (n_i_neg + gamma) / (n_neg + 2 * gamma)
    share_pos = (n_iy + gamma) / (n_y + 2 * gamma)
    return np.log(share_neg / share_pos)


def fit_woe(stats: CategoryStats, gamma: float = 0.5) -> FittedEncoder:
    if not gamma >= 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0:
        if stats.n_y == 0 or stats.n_neg == 0:
            raise DivisionByZeroError("woe with gamma=0 needs both classes in the training data")
        zero = stats.present & ((stats.n_iy == 0) | (stats.n_i_neg == 0))
        if zero.any():
            bad = int(np.flatnonzero(zero)[0])
            raise DivisionByZeroError(
                f"woe with gamma=0 is undefined for category code {bad}: "
                f"n_iY={int(stats.n_iy[bad])}, n_iYbar={int(stats.n_i_neg[bad])}", category=bad)
        fallback = 0.0
    else:
        fallback = float(woe_value(0, 0, stats.n_y, stats.n_tr, gamma))
    values = woe_value(stats.n_iy, stats.n_i, stats.n_y, stats.n_tr, gamma)
    return _make("woe", stats, values, fallback, {"gamma": float(gamma)})


@dataclass(frozen=True, eq=False)
class OrderedEncoding:
    """Training-row values of the ordered encoder plus the held-out encoder.

    ``values[r]`` is the value for training row ``r`` (original row order);
    ``permutation[t]`` is the row placed at position ``t``.
    """

    values: np.ndarray
    permutation: np.ndarray
    encoder: FittedEncoder


def ordered_prefix_counts(codes: np.ndarray, y: np.ndarray, permutation: np.ndarray):
    """For each row, counts of same-category rows (and positives) strictly before it in ``permutation``."""
    n = len(codes)
    pc = codes[permutation]
    py = y[permutation].astype(np.int64)
    # group positions by category, keeping permutation order inside each group
    order = np.lexsort((np.arange(n), pc))
    sc = pc[order]
    sy = py[order]
    starts = np.r_[True, sc[1:] != sc[:-1]]
    group_start = np.maximum.accumulate(np.where(starts, np.arange(n), 0))
    cum_y = np.cumsum(sy) - sy
    before_n = np.arange(n) - group_start
    before_y = cum_y - cum_y[group_start]
    cnt = np.empty(n, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    cnt[permutation[order]] = before_n
    pos[permutation[order]] = before_y
    return cnt, pos


def fit_catboost_ordered(column, target, m: float = 1.0, seed: int = 0, *,
                         prior: float | None = None, permutation=None,
                         n_categories: int | None = None) -> OrderedEncoding:
    """Ordered target statistics over one random permutation of the training rows.

    A row's value uses only rows that precede it in the permutation, through
    the M-estimate formula with the full-training prior. ``prior`` and
    ``permutation`` override the defaults (used to hold them fixed in tests).
    """
    if not m >= 0:
        raise ConfigError(f"m must be >= 0, got {m}")
    codes = np.asarray(column)
    y = np.asarray(target)
    stats = compute_stats(codes, y, n_categories)
    p_prior = stats.p_prior if prior is None else float(prior)
    if permutation is None:
        permutation = np.random.default_rng(seed).permutation(len(codes))
    permutation = np.asarray(permutation, dtype=np.intp)
    cnt, pos = ordered_prefix_counts(codes, y, permutation)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = (pos + p_prior * m) / (cnt + m)
    # m == 0 with an empty prefix: no evidence at all, fall back to the prior
    values = np.where(cnt + m > 0, values, p_prior)
    full = fit_m_estimate(stats, m)
    enc = FittedEncoder("catboost_ordered", full.mapping, full.fallback, full.prior,
                        {"m": float(m), "permutation_seed": int(seed)}, None, full.lam, stats)
    return OrderedEncoding(values, permutation, enc)


def fit_encoder(config: EncoderConfig, column, target, n_categories: int | None = None):
    """Fit the encoder described by ``config``.

    Returns ``(encoder, train_values)`` where ``train_values`` are the values
    to use for the fitting rows themselves (the ordered values for
    ``catboost_ordered``, a plain lookup otherwise).
    """
    if config.kind == "catboost_ordered":
        oe = fit_catboost_ordered(column, target, config.m, config.permutation_seed,
                                  n_categories=n_categories)
        return oe.encoder, oe.values
    stats = compute_stats(column, target, n_categories)
    if config.kind == "target":
        enc = fit_target(stats, config.k, config.f)
    elif config.kind == "m_estimate":
        enc = fit_m_estimate(stats, config.m)
    elif config.kind == "pozzolo":
        enc = fit_pozzolo(stats, config.pozzolo_variant, config.epsilon)
    elif config.kind == "james_stein":
        enc = fit_james_stein(stats)
    else:
        enc = fit_woe(stats, config.gamma)
    return enc, transform(enc, column)


def transform(enc: FittedEncoder, column) -> np.ndarray:
    """Map codes through the encoder; unseen codes get ``enc.fallback``."""
    codes = np.asarray(column, dtype=np.int64)
    if codes.size == 0:
        return np.empty(0, dtype=np.float64)
    size = max(int(codes.max()) + 1, 0)
    table = enc.lookup_table(size)
    out = np.full(codes.shape, enc.fallback, dtype=np.float64)
    ok = codes >= 0
    out[ok] = table[codes[ok]]
    return out


def transform_labels(enc: FittedEncoder, labels: Sequence[str]) -> np.ndarray:
    """Like :func:`transform` but keyed by category label instead of code."""
    if enc.labels is None:
        raise ConfigError("encoder carries no category labels")
    by_label = {lab: enc.mapping[c] for c, lab in enc.labels.items()}
    return np.array([by_label.get(lab, enc.fallback) for lab in labels], dtype=np.float64)


# -- persistence --------------------------------------------------------------
#
# version: 1
# kind: m_estimate
# params: {"m": 1.0}
# prior: 0x1.0000000000000p-1
# fallback: 0x1.0000000000000p-1
# categories: 2
# <code>\t<json label or null>\t<hex float>


def dumps_encoder(enc: FittedEncoder) -> str:
    lines = [
        f"version: {FORMAT_VERSION}",
        f"kind: {enc.kind}",
        f"params: {json.dumps(dict(enc.params), sort_keys=True)}",
        f"prior: {float(enc.prior).hex()}",
        f"fallback: {float(enc.fallback).hex()}",
        f"categories: {len(enc.mapping)}",
    ]
    for code in sorted(enc.mapping):
        label = None if enc.labels is None else enc.labels.get(code)
        lines.append(f"{code}\t{json.dumps(label, ensure_ascii=False)}\t{float(enc.mapping[code]).hex()}")
    return "\n".join(lines) + "\n"


def loads_encoder(text: str) -> FittedEncoder:
    lines = text.splitlines()
    header = {}
    try:
        for line in lines[:6]:
            key, _, value = line.partition(": ")
            header[key] = value
        if header.get("version") != str(FORMAT_VERSION):
            raise FormatError(f"unsupported encoder file version {header.get('version')!r}")
        kind = header["kind"]
        if kind not in KINDS:
            raise FormatError(f"unknown encoder kind {kind!r}")
        params = json.loads(header["params"])
        prior = float.fromhex(header["prior"])
        fallback = float.fromhex(header["fallback"])
        n = int(header["categories"])
        rows = lines[6:]
        if len(rows) != n:
            raise FormatError(f"expected {n} category rows, found {len(rows)}")
        mapping, labels = {}, {}
        for row in rows:
            code_s, label_s, value_s = row.split("\t")
            code = int(code_s)
            mapping[code] = float.fromhex(value_s)
            label = json.loads(label_s)
            if label is not None:
                labels[code] = label
    except FormatError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"corrupt encoder file: {exc}") from None
    if labels and len(labels) != len(mapping):
        raise FormatError("either every category or none must carry a label")
    return FittedEncoder(kind, mapping, fallback, prior, params, labels or None)


def save_encoder(enc: FittedEncoder, path) -> None:
    Path(path).write_text(dumps_encoder(enc), encoding="utf-8")


def load_encoder(path) -> FittedEncoder:
    return loads_encoder(Path(path).read_text(encoding="utf-8"))
