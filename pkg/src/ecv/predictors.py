"""Base predictors and randomized ensembles.

Base learners: a zero predictor, ridge and ridgeless linear regression,
k-nearest-neighbors, and a CART-style regression tree with per-node feature
subsampling.  Ensembles average base learners fitted on independent row
draws; member randomness is keyed by ``(seed, k, member_index)`` so a fitted
ensemble can be extended without refitting its prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .data import Dataset
from .errors import InvalidParameterError
from .sampling import MODES, SampleIndices, draw_indices
from .streams import substream

KINDS = ("null", "ridge", "ridgeless", "knn", "tree")


@dataclass(frozen=True)
class PredictorSpec:
    """Kind plus the hyperparameters relevant to that kind."""

    kind: str
    lam: float = 0.1
    neighbors: int = 5
    min_node_size: int = 5
    feature_fraction: float = 1.0 / 3.0
    max_depth: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "ridge" and not self.lam > 0:
            raise InvalidParameterError("ridge penalty must be positive")
        if self.kind == "knn" and self.neighbors < 1:
            raise InvalidParameterError("neighbors must be at least 1")
        if self.kind == "tree":
            if self.min_node_size < 1:
                raise InvalidParameterError("min_node_size must be at least 1")
            if not 0 < self.feature_fraction <= 1:
                raise InvalidParameterError("feature_fraction must be in (0, 1]")
            if self.max_depth is not None and self.max_depth < 1:
                raise InvalidParameterError("max_depth must be at least 1")

    @staticmethod
    def null() -> "PredictorSpec":
        return PredictorSpec(kind="null")

    @staticmethod
    def ridge(lam: float = 0.1) -> "PredictorSpec":
        return PredictorSpec(kind="ridge", lam=lam)

    @staticmethod
    def ridgeless() -> "PredictorSpec":
        return PredictorSpec(kind="ridgeless")

    @staticmethod
    def knn(neighbors: int = 5) -> "PredictorSpec":
        return PredictorSpec(kind="knn", neighbors=neighbors)

    @staticmethod
    def tree(min_node_size: int = 5, feature_fraction: float = 1.0 / 3.0,
             max_depth: Optional[int] = None) -> "PredictorSpec":
        return PredictorSpec(kind="tree", min_node_size=min_node_size,
                             feature_fraction=feature_fraction, max_depth=max_depth)

    def to_json_dict(self) -> dict:
        if self.kind == "ridge":
            return {"kind": "ridge", "lambda": self.lam}
        if self.kind == "knn":
            return {"kind": "knn", "neighbors": self.neighbors}
        if self.kind == "tree":
            return {
                "kind": "tree",
                "min_node_size": self.min_node_size,
                "feature_fraction": self.feature_fraction,
                "max_depth": self.max_depth,
            }
        return {"kind": self.kind}

    @staticmethod
    def from_json_dict(block: dict) -> "PredictorSpec":
        if "kind" not in block:
            raise InvalidParameterError("predictor block needs a 'kind' key")
        kind = block["kind"]
        allowed = {
            "null": set(),
            "ridge": {"lambda"},
            "ridgeless": set(),
            "knn": {"neighbors"},
            "tree": {"min_node_size", "feature_fraction", "max_depth"},
        }
        if kind not in allowed:
            raise InvalidParameterError(f"kind must be one of {KINDS}, got {kind!r}")
        unknown = set(block) - allowed[kind] - {"kind"}
        if unknown:
            raise InvalidParameterError(
                f"unknown keys for {kind} predictor: {sorted(unknown)}"
            )
        kwargs = {k: v for k, v in block.items() if k != "kind"}
        if "lambda" in kwargs:
            kwargs["lam"] = kwargs.pop("lambda")
        return PredictorSpec(kind=kind, **kwargs)


# ============================================================
# fitted base predictors
# ============================================================


class FittedNull:
    p = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[0], dtype=np.float64)


class FittedLinear:
    def __init__(self, beta: np.ndarray):
        self.beta = beta
        self.p = beta.shape[0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return x @ self.beta


class FittedKnn:
    def __init__(self, xs: np.ndarray, ys: np.ndarray, neighbors: int):
        self.xs = xs
        self.ys = ys
        self.neighbors = neighbors
        self.p = xs.shape[1]
        self._sq = np.einsum("ij,ij->i", xs, xs)

    def predict(self, x: np.ndarray) -> np.ndarray:
        d2 = (
            np.einsum("ij,ij->i", x, x)[:, None]
            - 2.0 * (x @ self.xs.T)
            + self._sq[None, :]
        )
        # stable sort breaks distance ties by training-row position
        order = np.argsort(d2, axis=1, kind="stable")[:, : self.neighbors]
        return self.ys[order].mean(axis=1)


@njit(cache=True, nogil=True)
def _grow_tree(xs, ys, min_node, mtry, max_depth, uniforms):
    m, p = xs.shape
    max_nodes = uniforms.shape[0]
    feature = np.full(max_nodes, -1, np.int64)
    thresh = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)
    rows = np.arange(m)
    stack = np.empty((max_nodes, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m
    stack[0, 3] = 0
    top = 1
    node_count = 1
    feat_buf = np.empty(p, np.int64)
    vals = np.empty(m, np.float64)
    while top > 0:
        top -= 1
        nid = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        size = end - start
        s = 0.0
        ss = 0.0
        for i in range(start, end):
            v = ys[rows[i]]
            s += v
            ss += v * v
        value[nid] = s / size
        if size < 2 * min_node or depth >= max_depth or node_count + 2 > max_nodes:
            continue
        # partial Fisher-Yates for mtry candidate features without replacement
        for j in range(p):
            feat_buf[j] = j
        for j in range(mtry):
            r = j + int(uniforms[nid, j] * (p - j))
            if r >= p:
                r = p - 1
            tmp = feat_buf[j]
            feat_buf[j] = feat_buf[r]
            feat_buf[r] = tmp
        cand = np.sort(feat_buf[:mtry])
        node_score = s * s / size
        gain_floor = 1e-12 * max(1.0, ss)
        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        for ci in range(mtry):
            f = cand[ci]
            for i in range(size):
                vals[i] = xs[rows[start + i], f]
            order = np.argsort(vals[:size], kind="mergesort")
            cum = 0.0
            for pos in range(size - 1):
                oi = order[pos]
                cum += ys[rows[start + oi]]
                nl = pos + 1
                nr = size - nl
                if nl < min_node:
                    continue
                if nr < min_node:
                    break
                v_here = vals[oi]
                v_next = vals[order[pos + 1]]
                if v_here == v_next:
                    continue
                gain = cum * cum / nl + (s - cum) * (s - cum) / nr - node_score
                # strict comparisons keep the lexicographically smallest
                # (feature, threshold) pair on exact ties
                if gain > best_gain and gain > gain_floor:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (v_here + v_next)
        if best_feat < 0:
            continue
        i = start
        j = end - 1
        while i <= j:
            if xs[rows[i], best_feat] <= best_thr:
                i += 1
            else:
                tmp = rows[i]
                rows[i] = rows[j]
                rows[j] = tmp
                j -= 1
        mid = i
        lid = node_count
        rid = node_count + 1
        node_count += 2
        feature[nid] = best_feat
        thresh[nid] = best_thr
        left[nid] = lid
        right[nid] = rid
        stack[top, 0] = rid
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1
    return (feature[:node_count], thresh[:node_count], left[:node_count],
            right[:node_count], value[:node_count])


@njit(cache=True, nogil=True)
def _tree_apply(xq, feature, thresh, left, right, value):
    m = xq.shape[0]
    out = np.empty(m, np.float64)
    for i in range(m):
        nid = 0
        while feature[nid] >= 0:
            if xq[i, feature[nid]] <= thresh[nid]:
                nid = left[nid]
            else:
                nid = right[nid]
        out[i] = value[nid]
    return out


class FittedTree:
    def __init__(self, feature, thresh, left, right, value, p: int):
        self.feature = feature
        self.thresh = thresh
        self.left = left
        self.right = right
        self.value = value
        self.p = p

    def predict(self, x: np.ndarray) -> np.ndarray:
        return _tree_apply(np.ascontiguousarray(x, dtype=np.float64),
                           self.feature, self.thresh, self.left, self.right,
                           self.value)


def _fit_tree(xs, ys, spec: PredictorSpec, rng: np.random.Generator) -> FittedTree:
    m, p = xs.shape
    mtry = min(p, max(1, math.ceil(spec.feature_fraction * p)))
    max_nodes = 2 * (m // spec.min_node_size + 2)
    depth_cap = spec.max_depth if spec.max_depth is not None else 2**31
    uniforms = rng.random((max_nodes, mtry))
    parts = _grow_tree(np.ascontiguousarray(xs), np.ascontiguousarray(ys),
                       spec.min_node_size, mtry, depth_cap, uniforms)
    return FittedTree(*parts, p=p)


def fit_base(spec: PredictorSpec, data: Dataset, idx: SampleIndices,
             rng: Optional[np.random.Generator] = None):
    """Fit one base predictor on the drawn rows (duplicates kept)."""
    if idx.n != data.n:
        raise InvalidParameterError("draw does not match the dataset row count")
    if spec.kind == "null":
        return FittedNull()
    xs = data.x[idx.draws]
    ys = data.y[idx.draws]
    k = idx.k
    if spec.kind == "ridge":
        gram = xs.T @ xs / k + spec.lam * np.eye(data.p)
        beta = np.linalg.solve(gram, xs.T @ ys / k)
        return FittedLinear(beta)
    if spec.kind == "ridgeless":
        beta = np.linalg.lstsq(xs, ys, rcond=None)[0]
        return FittedLinear(beta)
    if spec.kind == "knn":
        if k < spec.neighbors:
            raise InvalidParameterError(
                f"knn needs k >= neighbors, got k={k}, neighbors={spec.neighbors}"
            )
        return FittedKnn(xs, ys, spec.neighbors)
    if rng is None:
        rng = substream(0, "fit-base-default")
    return _fit_tree(xs, ys, spec, rng)


def predict_base(member, x: np.ndarray) -> np.ndarray:
    """Evaluate one fitted base predictor on rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidParameterError("x must be a 2-d array")
    if member.p is not None and x.shape[1] != member.p:
        raise InvalidParameterError(
            f"x has {x.shape[1]} columns, predictor expects {member.p}"
        )
    return member.predict(x)


# ============================================================
# ensembles
# ============================================================


@dataclass(frozen=True)
class FittedEnsemble:
    spec: PredictorSpec
    mode: str
    k: int
    members: tuple
    indices: tuple

    @property
    def m(self) -> int:
        return len(self.members)

    def member_matrix(self, x: np.ndarray) -> np.ndarray:
        """Stack member predictions into an (m, rows) matrix."""
        return np.stack([predict_base(mem, x) for mem in self.members])


def fit_ensemble(spec: PredictorSpec, data: Dataset, k: int, m: int, mode: str,
                 seed: int) -> FittedEnsemble:
    """Fit an m-member ensemble of subsampled base predictors."""
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")
    if m < 1:
        raise InvalidParameterError("ensemble size must be at least 1")
    members = []
    indices = []
    for ell in range(1, m + 1):
        idx = draw_indices(data.n, k, mode, substream(seed, k, ell))
        members.append(fit_base(spec, data, idx, rng=substream(seed, k, ell, "fit")))
        indices.append(idx)
    return FittedEnsemble(spec=spec, mode=mode, k=k, members=tuple(members),
                          indices=tuple(indices))


def extend_ensemble(ens: FittedEnsemble, data: Dataset, extra: int,
                    seed: int) -> FittedEnsemble:
    """Add ``extra`` members, continuing the member keying at ens.m + 1.

    With the same seed, fitting m + extra members directly and extending an
    m-member ensemble produce identical results member by member.
    """
    if extra < 1:
        raise InvalidParameterError("extra must be at least 1")
    if data.n != ens.indices[0].n:
        raise InvalidParameterError("dataset row count changed since the fit")
    members = list(ens.members)
    indices = list(ens.indices)
    for ell in range(ens.m + 1, ens.m + extra + 1):
        idx = draw_indices(data.n, ens.k, ens.mode, substream(seed, ens.k, ell))
        members.append(fit_base(ens.spec, data, idx,
                                rng=substream(seed, ens.k, ell, "fit")))
        indices.append(idx)
    return FittedEnsemble(spec=ens.spec, mode=ens.mode, k=ens.k,
                          members=tuple(members), indices=tuple(indices))


def ensemble_prefix(ens: FittedEnsemble, m: int) -> FittedEnsemble:
    """View of the first m members as their own ensemble."""
    if not 1 <= m <= ens.m:
        raise InvalidParameterError(f"need 1 <= m <= {ens.m}, got {m}")
    return FittedEnsemble(spec=ens.spec, mode=ens.mode, k=ens.k,
                          members=ens.members[:m], indices=ens.indices[:m])


def predict_ensemble(ens: FittedEnsemble, x: np.ndarray,
                     use_first: Optional[int] = None) -> np.ndarray:
    """Average the first ``use_first`` member predictions (default: all)."""
    m = ens.m if use_first is None else use_first
    if not 1 <= m <= ens.m:
        raise InvalidParameterError(
            f"use_first must satisfy 1 <= use_first <= {ens.m}, got {use_first}"
        )
    x = np.asarray(x, dtype=np.float64)
    out = predict_base(ens.members[0], x)
    for mem in ens.members[1:m]:
        out = out + predict_base(mem, x)
    return out / m
