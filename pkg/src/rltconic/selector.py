"""Quantile regression forests predicting per-variant NLBpace.

One forest is grown per variant.  Trees are ordinary CART regression trees on
bootstrap samples, but every leaf keeps the raw training targets that reached
it, so a forest yields a whole conditional distribution: each training value
in the query's leaf of tree ``t`` gets weight ``1 / (B * leaf size)`` and the
q-quantile of that weighted sample is the prediction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .metrics import geometric_mean_pace
from .strengthen import ALL_VARIANTS, Variant

MODEL_FORMAT = "rltconic-qrf"
MODEL_VERSION = 1
MIN_ROWS = 10


@dataclass
class TrainingRow:
    instance: str
    features: Mapping[str, float]
    targets: Mapping[str, float]  # variant name -> NLBpace
    paces: Mapping[str, float] | None = None  # raw LBpace, for policy evaluation


@dataclass
class QrfConfig:
    trees: int = 500
    mtry: int | None = None  # default ceil(sqrt(#features))
    min_leaf: int = 3
    seed: int = 42

    def __post_init__(self):
        if self.trees < 1:
            raise ValueError("need at least one tree")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")


@dataclass
class Tree:
    feature: list[int]  # -1 marks a leaf
    threshold: list[float]
    left: list[int]
    right: list[int]
    leaf: list[int]  # index into leaf_values for leaf nodes, else -1
    leaf_values: list[list[float]]
    leaf_rows: list[list[int]]  # in-bag rows, with bootstrap multiplicity
    oob: list[int]

    def apply(self, x: np.ndarray) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.leaf[node]

    def to_json(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left, "right": self.right,
                "leaf": self.leaf, "leaf_values": self.leaf_values, "leaf_rows": self.leaf_rows, "oob": self.oob}

    @classmethod
    def from_json(cls, d: dict) -> Tree:
        return cls(**{k: d[k] for k in ("feature", "threshold", "left", "right", "leaf", "leaf_values",
                                        "leaf_rows", "oob")})


@dataclass
class QrfModel:
    feature_names: list[str]
    variants: list[str]
    instances: list[str]
    config: QrfConfig
    forests: dict[str, list[Tree]] = field(default_factory=dict)
    targets: dict[str, list[float]] = field(default_factory=dict)
    paces: dict[str, list[float]] = field(default_factory=dict)

    def vector(self, features) -> np.ndarray:
        if isinstance(features, Mapping):
            missing = [k for k in self.feature_names if k not in features]
            if missing:
                raise ValueError(f"missing features: {', '.join(missing[:5])}")
            return np.array([float(features[k]) for k in self.feature_names])
        x = np.asarray(features, dtype=float)
        if x.shape != (len(self.feature_names),):
            raise ValueError(f"expected {len(self.feature_names)} features, got shape {x.shape}")
        return x

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "feature_names": self.feature_names,
            "variants": self.variants,
            "instances": self.instances,
            "config": {"trees": self.config.trees, "mtry": self.config.mtry, "min_leaf": self.config.min_leaf,
                       "seed": self.config.seed},
            "targets": self.targets,
            "paces": self.paces,
            "forests": {v: [t.to_json() for t in trees] for v, trees in self.forests.items()},
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> QrfModel:
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a quantile regression forest model")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        cfg = QrfConfig(**doc["config"])
        return cls(doc["feature_names"], doc["variants"], doc["instances"], cfg,
                   {v: [Tree.from_json(t) for t in ts] for v, ts in doc["forests"].items()},
                   doc["targets"], doc.get("paces", {}))


def save_model(model: QrfModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model.to_json())


def load_model(path) -> QrfModel:
    with open(path, encoding="utf-8") as fh:
        return QrfModel.from_json(fh.read())


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray, feats: Sequence[int], min_leaf: int):
    n = idx.size
    yy = y[idx]
    total_sse = float(((yy - yy.mean()) ** 2).sum())
    best = None
    for f in feats:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], yy[order]
        s1 = np.cumsum(ys)
        s2 = np.cumsum(ys * ys)
        k = np.arange(min_leaf, n - min_leaf + 1)
        k = k[xs[k - 1] < xs[np.minimum(k, n - 1)]]
        if k.size == 0:
            continue
        left = s2[k - 1] - s1[k - 1] ** 2 / k
        rs1 = s1[-1] - s1[k - 1]
        rs2 = s2[-1] - s2[k - 1]
        right = rs2 - rs1 ** 2 / (n - k)
        sse = left + right
        i = int(np.argmin(sse))
        gain = total_sse - float(sse[i])
        if gain > 1e-12 and (best is None or gain > best[0]):
            kk = int(k[i])
            thr = 0.5 * (xs[kk - 1] + xs[kk])
            if not thr < xs[kk]:  # adjacent floats: the midpoint rounds up
                thr = xs[kk - 1]
            best = (gain, f, float(thr))
    return best


def _grow(X: np.ndarray, y: np.ndarray, bag: np.ndarray, mtry: int, min_leaf: int,
          rng: np.random.Generator) -> Tree:
    t = Tree([], [], [], [], [], [], [], [])

    def new_node() -> int:
        for arr, val in ((t.feature, -1), (t.threshold, 0.0), (t.left, -1), (t.right, -1), (t.leaf, -1)):
            arr.append(val)
        return len(t.feature) - 1

    stack = [(new_node(), np.sort(bag))]
    while stack:
        node, idx = stack.pop()
        split = None
        if idx.size >= 2 * min_leaf and np.ptp(y[idx]) > 0:
            varying = [f for f in range(X.shape[1]) if np.ptp(X[idx, f]) > 0]
            if varying:
                k = min(mtry, len(varying))
                feats = sorted(int(f) for f in rng.choice(varying, size=k, replace=False))
                split = _best_split(X, y, idx, feats, min_leaf)
        if split is None:
            t.leaf[node] = len(t.leaf_values)
            t.leaf_values.append([float(v) for v in y[idx]])
            t.leaf_rows.append([int(i) for i in idx])
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        left, right = new_node(), new_node()
        t.feature[node], t.threshold[node] = int(f), float(thr)
        t.left[node], t.right[node] = left, right
        stack.append((right, idx[~mask]))
        stack.append((left, idx[mask]))
    return t


def train(rows: Sequence[TrainingRow], cfg: QrfConfig | None = None,
          feature_names: Sequence[str] | None = None, variants: Sequence[str] | None = None) -> QrfModel:
    """Grow one quantile regression forest per variant."""
    cfg = cfg or QrfConfig()
    if len(rows) < MIN_ROWS:
        raise ValueError(f"need at least {MIN_ROWS} training rows, got {len(rows)}")
    rows = sorted(rows, key=lambda r: r.instance)
    if len({r.instance for r in rows}) != len(rows):
        raise ValueError("duplicate instance ids in training rows")
    names = list(feature_names or sorted(rows[0].features))
    if variants is None:
        present = set(rows[0].targets)
        variants = [v.value for v in ALL_VARIANTS if v.value in present] + sorted(
            present - {v.value for v in ALL_VARIANTS})
    variants = list(variants)
    for r in rows:
        missing = [v for v in variants if v not in r.targets or not math.isfinite(r.targets[v])]
        if missing:
            raise ValueError(f"instance {r.instance}: missing targets for {', '.join(missing)}")
    X = np.array([[float(r.features[k]) for k in names] for r in rows])
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    mtry = cfg.mtry or max(1, math.ceil(math.sqrt(len(names))))
    model = QrfModel(names, variants, [r.instance for r in rows], cfg)
    m = len(rows)
    for vi, v in enumerate(variants):
        y = np.array([float(r.targets[v]) for r in rows])
        model.targets[v] = [float(t) for t in y]
        model.paces[v] = [float(r.paces[v]) if r.paces and v in r.paces else
                          (1.0 / t if t > 0 else math.inf) for r, t in zip(rows, y)]
        trees = []
        for b in range(cfg.trees):
            rng = np.random.default_rng([cfg.seed, vi, b])
            bag = rng.integers(0, m, size=m)
            tree = _grow(X, y, bag, mtry, cfg.min_leaf, rng)
            tree.oob = sorted(set(range(m)) - set(int(i) for i in bag))
            trees.append(tree)
        model.forests[v] = trees
    return model


def weighted_quantile(values: Sequence[float], weights: Sequence[float], q: float) -> float:
    """``inf{y : F(y) >= q}`` for the weighted empirical distribution."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cdf = np.cumsum(w) / w.sum()
    i = int(np.searchsorted(cdf, q - 1e-12, side="left"))
    return float(v[min(i, v.size - 1)])


def _forest_quantile(trees: Sequence[Tree], x: np.ndarray, q: float, exclude: int | None = None) -> float:
    values, weights = [], []
    used = 0
    for t in trees:
        if exclude is not None and exclude not in t.oob:
            continue
        leaf = t.apply(x)
        vals = t.leaf_values[leaf]
        values += vals
        weights += [1.0 / len(vals)] * len(vals)
        used += 1
    if used == 0:
        return math.nan
    return weighted_quantile(values, weights, q)


def _check_q(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie strictly between 0 and 1")


def predict_quantile(model: QrfModel, variant, features, q: float = 0.5) -> float:
    _check_q(q)
    v = variant.value if isinstance(variant, Variant) else str(variant)
    if v not in model.forests:
        raise ValueError(f"model has no forest for variant {v!r}")
    return _forest_quantile(model.forests[v], model.vector(features), q)


def _argmax_variant(preds: Mapping[str, float], order: Sequence[str]) -> str:
    best, best_val = None, -math.inf
    for v in order:
        if preds[v] > best_val:
            best, best_val = v, preds[v]
    return best if best is not None else order[0]


def _order(model: QrfModel) -> list[str]:
    known = [v.value for v in ALL_VARIANTS if v.value in model.variants]
    return known + [v for v in model.variants if v not in known]


def select_variant(model: QrfModel, features, q: float = 0.5) -> str:
    """Variant with the highest predicted NLBpace quantile; ties go to the earliest (RLT first)."""
    _check_q(q)
    x = model.vector(features)
    preds = {v: _forest_quantile(model.forests[v], x, q) for v in model.variants}
    return _argmax_variant(preds, _order(model))


@dataclass
class OobReport:
    selections: dict[str, str]  # instance -> variant
    achieved: dict[str, float]  # instance -> NLBpace of the selection
    excluded: int
    policy_pace: float
    fixed_pace: dict[str, float]
    top1_accuracy: float


def oob_evaluate(model: QrfModel, rows: Sequence[TrainingRow], q: float = 0.5) -> OobReport:
    """Out-of-bag policy evaluation on the training rows."""
    _check_q(q)
    index = {inst: i for i, inst in enumerate(model.instances)}
    order = _order(model)
    selections, achieved = {}, {}
    excluded = 0
    hits = 0
    policy, fixed = [], {v: [] for v in order}
    for r in rows:
        i = index.get(r.instance)
        if i is None:
            raise ValueError(f"instance {r.instance} was not used for training")
        x = model.vector(r.features)
        preds = {v: _forest_quantile(model.forests[v], x, q, exclude=i) for v in order}
        if any(math.isnan(p) for p in preds.values()):
            excluded += 1
            continue
        choice = _argmax_variant(preds, order)
        selections[r.instance] = choice
        achieved[r.instance] = float(model.targets[choice][i])
        best = max(model.targets[v][i] for v in order)
        hits += model.targets[choice][i] == best
        policy.append(model.paces[choice][i])
        for v in order:
            fixed[v].append(model.paces[v][i])
    n_eval = len(selections)
    return OobReport(selections, achieved, excluded, geometric_mean_pace(policy),
                     {v: geometric_mean_pace(p) for v, p in fixed.items()},
                     hits / n_eval if n_eval else math.nan)
