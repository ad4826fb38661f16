"""Deterministic text embeddings and clustering for alert descriptions.

Embeddings are hashed TF-IDF vectors of a fixed dimension (300) with L2
normalization; clustering is BIRCH (one-pass CF-tree, then agglomerative
reduction of leaf centroids to k clusters); model selection maximizes
the mean silhouette coefficient over a k range.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyCorpus, KTooLarge, SingleCluster

DIM = 300

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_NUM_RE = re.compile(r"^\d+$")


def tokenize(text: str) -> list:
    tokens = _TOKEN_RE.findall(text.lower())
    return ["<num>" if _NUM_RE.match(t) else t for t in tokens]


def _hash_token(token: str) -> Tuple[int, float]:
    """Stable (bucket, sign) for the hashing trick."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "big")
    bucket = value % DIM
    sign = 1.0 if (value >> 62) & 1 else -1.0
    return bucket, sign


class Vectorizer:
    """Hashed TF-IDF embedder, dimension fixed at 300.

    IDF weights are fit on a corpus; unseen tokens fall back to a
    neutral IDF of 1.  Output vectors are L2-normalized (zero vector
    for empty text).
    """

    def __init__(self, idf: Optional[Dict[str, float]] = None):
        self.dim = DIM
        self.idf = idf or {}

    @classmethod
    def fit(cls, corpus: Sequence[str]) -> "Vectorizer":
        if not corpus:
            raise EmptyCorpus("cannot fit vectorizer on an empty corpus")
        n_docs = len(corpus)
        df: Dict[str, int] = {}
        for text in corpus:
            for token in set(tokenize(text)):
                df[token] = df.get(token, 0) + 1
        idf = {
            token: math.log((1 + n_docs) / (1 + count)) + 1.0
            for token, count in sorted(df.items())
        }
        return cls(idf=idf)

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        tokens = tokenize(text)
        if not tokens:
            return vec
        tf: Dict[str, int] = {}
        for t in tokens:
            tf[t] = tf.get(t, 0) + 1
        for token, count in tf.items():
            bucket, sign = _hash_token(token)
            vec[bucket] += sign * count * self.idf.get(token, 1.0)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec

    def embed_many(self, texts: Iterable[str]) -> np.ndarray:
        return np.array([self.embed(t) for t in texts])

    def to_dict(self) -> dict:
        return {"dim": self.dim, "idf": self.idf}

    @classmethod
    def from_dict(cls, d: dict) -> "Vectorizer":
        return cls(idf=dict(d.get("idf") or {}))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is zero."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# -- BIRCH CF-tree -----------------------------------------------------


class _CF:
    """Clustering feature: count, linear sum, sum of squared norms."""

    __slots__ = ("n", "ls", "ss")

    def __init__(self, dim: int):
        self.n = 0
        self.ls = np.zeros(dim)
        self.ss = 0.0

    def add_point(self, x: np.ndarray):
        self.n += 1
        self.ls += x
        self.ss += float(np.dot(x, x))

    def merge(self, other: "_CF"):
        self.n += other.n
        self.ls += other.ls
        self.ss += other.ss

    def centroid(self) -> np.ndarray:
        return self.ls / self.n

    def radius(self) -> float:
        c = self.centroid()
        val = self.ss / self.n - float(np.dot(c, c))
        return math.sqrt(max(val, 0.0))

    def radius_with(self, x: np.ndarray) -> float:
        n = self.n + 1
        ls = self.ls + x
        ss = self.ss + float(np.dot(x, x))
        c = ls / n
        return math.sqrt(max(ss / n - float(np.dot(c, c)), 0.0))

    def copy(self) -> "_CF":
        cf = _CF(len(self.ls))
        cf.n, cf.ls, cf.ss = self.n, self.ls.copy(), self.ss
        return cf


class _Node:
    __slots__ = ("is_leaf", "cfs", "children")

    def __init__(self, is_leaf: bool):
        self.is_leaf = is_leaf
        self.cfs: List[_CF] = []
        self.children: List["_Node"] = []  # parallel to cfs for internal nodes


class CFTree:
    """Height-balanced BIRCH tree with branching factor B and leaf merge
    threshold T; parent CFs are the sums of their children's."""

    def __init__(self, branching: int = 50, threshold: float = 0.1, dim: int = DIM):
        self.branching = branching
        self.threshold = threshold
        self.dim = dim
        self.root = _Node(is_leaf=True)
        self.leaf_count = 0

    def insert(self, x: np.ndarray):
        split = self._insert(self.root, x)
        if split is not None:
            old_root = self.root
            (cf1, node1), (cf2, node2) = split
            self.root = _Node(is_leaf=False)
            self.root.cfs = [cf1, cf2]
            self.root.children = [node1, node2]

    def _insert(self, node: _Node, x: np.ndarray):
        if node.is_leaf:
            best, best_d = None, math.inf
            for i, cf in enumerate(node.cfs):
                d = float(np.linalg.norm(cf.centroid() - x))
                if d < best_d:
                    best, best_d = i, d
            if best is not None and node.cfs[best].radius_with(x) <= self.threshold:
                node.cfs[best].add_point(x)
                return None
            cf = _CF(self.dim)
            cf.add_point(x)
            node.cfs.append(cf)
            self.leaf_count += 1
            if len(node.cfs) > self.branching:
                return self._split(node)
            return None
        # internal: descend into closest child
        best, best_d = 0, math.inf
        for i, cf in enumerate(node.cfs):
            d = float(np.linalg.norm(cf.centroid() - x))
            if d < best_d:
                best, best_d = i, d
        split = self._insert(node.children[best], x)
        node.cfs[best] = self._sum_cf(node.children[best])
        if split is not None:
            (cf1, child1), (cf2, child2) = split
            node.cfs[best] = cf1
            node.children[best] = child1
            node.cfs.append(cf2)
            node.children.append(child2)
            if len(node.cfs) > self.branching:
                return self._split(node)
        return None

    def _sum_cf(self, node: _Node) -> _CF:
        total = _CF(self.dim)
        for cf in node.cfs:
            total.merge(cf)
        return total

    def _split(self, node: _Node):
        """Split an overfull node by its farthest centroid pair."""
        centroids = np.array([cf.centroid() for cf in node.cfs])
        d2 = ((centroids[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        i, j = np.unravel_index(np.argmax(d2), d2.shape)
        left = _Node(is_leaf=node.is_leaf)
        right = _Node(is_leaf=node.is_leaf)
        for idx, cf in enumerate(node.cfs):
            target = left if d2[idx, i] <= d2[idx, j] else right
            target.cfs.append(cf)
            if not node.is_leaf:
                target.children.append(node.children[idx])
        return (self._sum_cf(left), left), (self._sum_cf(right), right)

    def leaf_entries(self) -> List[_CF]:
        out: List[_CF] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.extend(node.cfs)
            else:
                stack.extend(reversed(node.children))
        return out


def _build_tree(vectors: np.ndarray, branching: int, threshold: float,
                node_budget: int) -> CFTree:
    """Build the CF-tree, doubling the threshold and rebuilding whenever
    the leaf entry count exceeds the node budget."""
    t = threshold
    while True:
        tree = CFTree(branching=branching, threshold=t, dim=vectors.shape[1])
        over = False
        for x in vectors:
            tree.insert(x)
            if tree.leaf_count > node_budget:
                over = True
                break
        if not over:
            return tree
        t *= 2


def _leaf_centroids(tree: CFTree, vectors: np.ndarray, k_max: int,
                    node_budget: int) -> np.ndarray:
    entries = tree.leaf_entries()
    centroids = np.array([cf.centroid() for cf in entries])
    if len(centroids) < k_max:
        # not enough leaf granularity: fall back to distinct points
        distinct = np.unique(vectors, axis=0)[:max(k_max, node_budget)]
        if len(distinct) >= len(centroids):
            centroids = distinct
    return centroids


def _reduce_centroids(centroids: np.ndarray, k: int) -> np.ndarray:
    """Average-linkage agglomeration of leaf centroids down to k."""
    from scipy.cluster.hierarchy import fcluster, linkage

    if len(centroids) <= k:
        reps = centroids
        while len(reps) < k:
            reps = np.vstack([reps, reps[:k - len(reps)]])
        return reps
    Z = linkage(centroids, method="average", metric="euclidean")
    labels = fcluster(Z, t=k, criterion="maxclust")
    return np.array([centroids[labels == c].mean(axis=0)
                     for c in range(1, labels.max() + 1)])


def cluster_birch(vectors: np.ndarray, k: int, branching: int = 50,
                  threshold: float = 0.1, node_budget: int = 2048) -> np.ndarray:
    """One-pass CF-tree build, reduce leaf centroids to k by average-linkage
    agglomeration, assign each vector to the nearest final centroid."""
    vectors = np.asarray(vectors, dtype=float)
    n = len(vectors)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} vectors")
    tree = _build_tree(vectors, branching, threshold, node_budget)
    leaf_cents = _leaf_centroids(tree, vectors, k, node_budget)
    centroids = _reduce_centroids(leaf_cents, k)
    d2 = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
    return d2.argmin(axis=1)


@dataclass
class ClusterQualityReport:
    silhouettes: np.ndarray
    a: np.ndarray
    b: np.ndarray
    mean: float
    k: int


def silhouette(vectors: np.ndarray, assignment: Sequence[int]) -> ClusterQualityReport:
    """Exact O(n^2) silhouette; singleton clusters score 0 by convention."""
    vectors = np.asarray(vectors, dtype=float)
    labels = np.asarray(assignment)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise SingleCluster("silhouette undefined for a single cluster")
    n = len(vectors)
    dist = np.sqrt(np.maximum(
        ((vectors[:, None, :] - vectors[None, :, :]) ** 2).sum(-1), 0.0))
    a = np.zeros(n)
    b = np.zeros(n)
    s = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        own_size = own.sum()
        if own_size == 1:
            continue  # s=0 convention for singletons
        a[i] = dist[i][own].sum() / (own_size - 1)
        b[i] = min(dist[i][labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a[i], b[i])
        s[i] = (b[i] - a[i]) / denom if denom > 0 else 0.0
    return ClusterQualityReport(silhouettes=s, a=a, b=b, mean=float(s.mean()), k=len(uniq))


def select_cluster_count(vectors: np.ndarray, k_range: Sequence[int],
                         branching: int = 50, threshold: float = 0.1,
                         node_budget: int = 2048):
    """argmax of mean silhouette over k_range; ties go to the smaller k.

    Returns (k_star, {k: mean_silhouette}).  The CF-tree is built once
    and only the agglomeration/assignment step reruns per k.
    """
    vectors = np.asarray(vectors, dtype=float)
    tree = _build_tree(vectors, branching, threshold, node_budget)
    k_max = max(k_range)
    if k_max > len(vectors) - 1:
        raise KTooLarge(f"k range exceeds {len(vectors) - 1}")
    leaf_cents = _leaf_centroids(tree, vectors, k_max, node_budget)
    scores: Dict[int, float] = {}
    best_k, best_score = None, -math.inf
    for k in sorted(k_range):
        centroids = _reduce_centroids(leaf_cents, k)
        d2 = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        labels = d2.argmin(axis=1)
        if len(np.unique(labels)) < 2:
            scores[k] = -1.0
            continue
        score = silhouette(vectors, labels).mean
        scores[k] = score
        if score > best_score:
            best_k, best_score = k, score
    return best_k, scores


@dataclass
class ClusterModel:
    """Persisted vectorizer + final centroids; assigns texts to clusters."""

    vectorizer: Vectorizer
    centroids: np.ndarray

    @property
    def k(self) -> int:
        return len(self.centroids)

    @classmethod
    def train(cls, corpus: Sequence[str], k: int, branching: int = 50,
              threshold: float = 0.1) -> "ClusterModel":
        vectorizer = Vectorizer.fit(corpus)
        vectors = vectorizer.embed_many(corpus)
        labels = cluster_birch(vectors, k, branching=branching, threshold=threshold)
        centroids = np.array([
            vectors[labels == c].mean(axis=0) if (labels == c).any() else np.zeros(DIM)
            for c in range(labels.max() + 1)
        ])
        return cls(vectorizer=vectorizer, centroids=centroids)

    def assign(self, text: str) -> int:
        vec = self.vectorizer.embed(text)
        d2 = ((self.centroids - vec) ** 2).sum(axis=1)
        return int(d2.argmin())

    def to_dict(self) -> dict:
        return {
            "vectorizer": self.vectorizer.to_dict(),
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        return cls(
            vectorizer=Vectorizer.from_dict(d["vectorizer"]),
            centroids=np.array(d["centroids"]),
        )

    def save(self, path: str):
        with open(path, "w") as fp:
            json.dump(self.to_dict(), fp, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "ClusterModel":
        with open(path) as fp:
            return cls.from_dict(json.load(fp))
