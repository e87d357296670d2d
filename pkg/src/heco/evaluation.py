"""Downstream evaluation of frozen embeddings."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractError, DataError

PROBE_LR = 0.05
PROBE_L2 = 1e-4
PROBE_STEPS = 500
N_RUNS = 10


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    per_class: int = 20

    def __post_init__(self):
        sets = [set(np.asarray(x).tolist()) for x in (self.train, self.val, self.test)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise DataError("train/val/test splits overlap")


def make_split(labels: np.ndarray, per_class: int, rng: np.random.Generator, holdout: int = 1000) -> Split:
    """``per_class`` training nodes per class; val and test get ``holdout`` each,
    or an even halving of the remainder when the graph is too small."""
    labels = np.asarray(labels)
    train = []
    for c in np.unique(labels):
        ids = np.flatnonzero(labels == c)
        if len(ids) < per_class:
            raise DataError(f"class {c} has {len(ids)} nodes, fewer than {per_class}")
        train.extend(rng.choice(ids, per_class, replace=False).tolist())
    train = np.sort(np.array(train))
    rest = rng.permutation(np.setdiff1d(np.arange(len(labels)), train))
    size = holdout if len(rest) >= 2 * holdout else len(rest) // 2
    return Split(train, np.sort(rest[:size]), np.sort(rest[size:2 * size]), per_class)


# -- classification ----------------------------------------------------------


@dataclass
class LinearProbe:
    W: np.ndarray
    b: np.ndarray
    best_step: int = 0
    best_val_macro_f1: float = float("nan")

    def scores(self, x: np.ndarray) -> np.ndarray:
        return _softmax(x @ self.W + self.b)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(x @ self.W + self.b, axis=1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_linear_probe(
    x: np.ndarray,
    labels: np.ndarray,
    split: Split,
    rng: np.random.Generator | None = None,
    lr: float = PROBE_LR,
    l2: float = PROBE_L2,
    steps: int = PROBE_STEPS,
) -> LinearProbe:
    """Softmax regression by full-batch gradient descent, keeping the step with
    the best validation Macro-F1. Test labels are never read here."""
    labels = np.asarray(labels)
    classes = int(labels.max()) + 1
    ytr = labels[split.train]
    missing = set(range(classes)) - set(ytr.tolist())
    if missing:
        raise DataError(f"classes {sorted(missing)} absent from the training split")
    d = x.shape[1]
    if np.isinf(l2):
        return LinearProbe(np.zeros((d, classes)), np.zeros(classes))
    if rng is None:
        W = np.zeros((d, classes))
    else:
        bound = np.sqrt(6.0 / (d + classes))
        W = rng.uniform(-bound, bound, size=(d, classes))
    b = np.zeros(classes)
    xtr = x[split.train]
    onehot = np.eye(classes)[ytr]
    xval, yval = x[split.val], labels[split.val]
    best = LinearProbe(W.copy(), b.copy(), 0, -1.0)
    for step in range(1, steps + 1):
        p = _softmax(xtr @ W + b)
        g = (p - onehot) / len(ytr)
        W -= lr * (xtr.T @ g + l2 * W)
        b -= lr * g.sum(axis=0)
        if len(yval):
            f1 = macro_f1(yval, np.argmax(xval @ W + b, axis=1), classes)
            if f1 > best.best_val_macro_f1:
                best = LinearProbe(W.copy(), b.copy(), step, f1)
    if not len(yval):
        best = LinearProbe(W, b, steps, float("nan"))
    return best


def _confusion(truth: np.ndarray, pred: np.ndarray, classes: int) -> np.ndarray:
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def macro_f1(truth, pred, classes: int | None = None) -> float:
    truth, pred = np.asarray(truth), np.asarray(pred)
    classes = classes or int(max(truth.max(), pred.max())) + 1
    cm = _confusion(truth, pred, classes)
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1)
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    present = (cm.sum(axis=1) + cm.sum(axis=0)) > 0
    return float(f1[present].mean())


def micro_f1(truth, pred) -> float:
    # single-label multiclass: micro precision == micro recall == accuracy
    truth, pred = np.asarray(truth), np.asarray(pred)
    return float(np.mean(truth == pred))


def _binary_auc(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    allv = np.concatenate([pos_scores, neg_scores])
    order = np.argsort(allv, kind="mergesort")
    ranks = np.empty(len(allv))
    sorted_v = allv[order]
    # average ranks over ties
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_v)) + 1]
    ends = np.r_[starts[1:], len(allv)]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + e + 1) / 2.0
    n_pos, n_neg = len(pos_scores), len(neg_scores)
    return float((ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_ovr(truth, scores) -> float:
    """Macro average of one-vs-rest ROC AUC over classes present in ``truth``."""
    truth = np.asarray(truth)
    scores = np.asarray(scores, dtype=np.float64)
    present = np.unique(truth)
    if len(present) < 2:
        raise DataError("AUC is undefined when the truth holds a single class")
    vals = [_binary_auc(scores[truth == c, c], scores[truth != c, c]) for c in present]
    return float(np.mean(vals))


def classification_metrics(pred, probs, truth) -> tuple[float, float, float]:
    """(Macro-F1, Micro-F1, AUC) on a 0-1 scale."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if len(pred) != len(truth) or len(probs) != len(truth):
        raise ContractError("pred, probs and truth must be aligned")
    classes = int(max(truth.max(), pred.max(), np.asarray(probs).shape[1] - 1)) + 1
    return macro_f1(truth, pred, classes), micro_f1(truth, pred), auc_ovr(truth, probs)


# -- clustering ----------------------------------------------------------------


def _contingency(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if len(a) != len(b):
        raise ContractError("label arrays differ in length")
    if len(a) == 0:
        raise ContractError("empty label arrays")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(labels_a, labels_b) -> float:
    """Mutual information normalised by the arithmetic mean of the two entropies."""
    table = _contingency(labels_a, labels_b)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return max(mi, 0.0) / ((ha + hb) / 2.0)


def ari(labels_a, labels_b) -> float:
    table = _contingency(labels_a, labels_b)
    n = table.sum()

    def comb2(x):
        x = np.asarray(x, dtype=np.float64)
        return x * (x - 1) / 2.0

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        return 1.0
    return float((sum_ij - expected) / (maximum - expected))


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    sse_history: list[float]


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300, tol: float = 1e-10) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if k < 2:
        raise ContractError(f"k must be >= 2, got {k}")
    if k > n:
        raise ContractError(f"k={k} exceeds the number of points {n}")
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    centers = np.array(centers)
    history = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        history.append(float(dist[np.arange(n), labels].sum()))
        new = centers.copy()
        for c in range(k):
            members = x[labels == c]
            if len(members):
                new[c] = members.mean(axis=0)
        shift = float(((new - centers) ** 2).sum())
        centers = new
        if shift <= tol:
            break
    dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = dist.argmin(axis=1)
    history.append(float(dist[np.arange(n), labels].sum()))
    return KMeansResult(labels, centers, history)


def kmeans_cluster(
    x: np.ndarray, truth: np.ndarray, k: int, restarts: int = N_RUNS, seed: int = 0, n_init: int = 10
):
    """Cluster ``restarts`` times and score each run against ``truth``.

    Every run keeps the lowest-SSE solution of ``n_init`` k-means++ seedings.
    Returns the first run's labels and the per-run NMI/ARI lists.
    """
    if n_init < 1:
        raise ContractError(f"n_init must be >= 1, got {n_init}")
    runs = []
    for s in np.random.SeedSequence([seed, 7]).spawn(restarts):
        rng = np.random.default_rng(s)
        fits = [kmeans(x, k, rng) for _ in range(n_init)]
        runs.append(min(fits, key=lambda r: r.sse_history[-1]))
    report = {
        "nmi": [nmi(truth, r.labels) for r in runs],
        "ari": [ari(truth, r.labels) for r in runs],
    }
    return runs[0].labels, report


def silhouette(x: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette with Euclidean distances; points in singleton clusters score 0."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ContractError("silhouette needs at least two clusters")
    dist = cdist(x, x)
    onehot = (labels[:, None] == uniq[None, :]).astype(np.float64)
    sizes = onehot.sum(axis=0)
    sums = dist @ onehot
    own = np.searchsorted(uniq, labels)
    n = len(x)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(n), own] / np.maximum(own_size - 1, 1), 0.0)
    means = sums / sizes
    means[np.arange(n), own] = np.inf
    b = means.min(axis=1)
    s = np.where(own_size > 1, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
    return float(s.mean())


def project_2d(x: np.ndarray) -> np.ndarray:
    """Coordinates on the top two principal components of the centred data."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        raise ContractError("need at least two points")
    c = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(c, full_matrices=False)
    comps = vt[:2]
    # fix the sign so the largest-magnitude loading of each component is positive
    signs = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
    comps = comps * signs[:, None]
    out = c @ comps.T
    if out.shape[1] < 2:
        out = np.hstack([out, np.zeros((len(x), 2 - out.shape[1]))])
    return out


# -- reports ---------------------------------------------------------------


@dataclass
class EvalReport:
    rows: list[tuple[str, str, float, float]] = field(default_factory=list)

    def add(self, metric: str, split: str, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        self.rows.append((metric, split, float(values.mean()), float(values.std())))

    def get(self, metric: str, split: str) -> tuple[float, float]:
        for m, s, mu, sd in self.rows:
            if (m, s) == (metric, split):
                return mu, sd
        raise KeyError((metric, split))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "split", "mean", "std"])
        for m, s, mu, sd in self.rows:
            w.writerow([m, s, f"{mu:.6f}", f"{sd:.6f}"])
        return buf.getvalue()

    def table(self) -> str:
        """Plain-text table, one row per split, scores x100 as usual for these tasks."""
        splits = sorted({s for m, s, *_ in self.rows if m in ("macro_f1", "micro_f1", "auc")}, key=int)
        lines = []
        if splits:
            lines.append(f"{'labels':>8} {'Ma-F1':>14} {'Mi-F1':>14} {'AUC':>14}")
            for s in splits:
                cells = []
                for m in ("macro_f1", "micro_f1", "auc"):
                    mu, sd = self.get(m, s)
                    cells.append(f"{100 * mu:6.2f}±{100 * sd:4.2f}".rjust(14))
                lines.append(f"{s:>8} " + " ".join(cells))
        clus = [(m, mu, sd) for m, s, mu, sd in self.rows if m in ("nmi", "ari", "silhouette")]
        if clus:
            lines.append("  ".join(f"{m.upper()} {100 * mu:.2f}±{100 * sd:.2f}" for m, mu, sd in clus))
        return "\n".join(lines)


def evaluate_embeddings(
    x: np.ndarray,
    labels: np.ndarray,
    splits: dict[int, Split],
    seed: int = 0,
    runs: int = N_RUNS,
    cluster: bool = True,
) -> EvalReport:
    """Probe every split ``runs`` times and cluster ``runs`` times."""
    report = EvalReport()
    for per_class, split in sorted(splits.items()):
        scores = {"macro_f1": [], "micro_f1": [], "auc": []}
        for s in np.random.SeedSequence([seed, per_class]).spawn(runs):
            probe = train_linear_probe(x, labels, split, np.random.default_rng(s))
            xt = x[split.test]
            ma, mi, auc = classification_metrics(probe.predict(xt), probe.scores(xt), labels[split.test])
            scores["macro_f1"].append(ma)
            scores["micro_f1"].append(mi)
            scores["auc"].append(auc)
        for m, v in scores.items():
            report.add(m, str(per_class), v)
    if cluster:
        k = int(labels.max()) + 1
        _, rep = kmeans_cluster(x, labels, k, restarts=runs, seed=seed)
        report.add("nmi", "all", rep["nmi"])
        report.add("ari", "all", rep["ari"])
    return report
