"""Desk-scale downstream classification with and without augmentation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .layout import jitter_document
from .metrics import TokenizerConfig, tokenize_layout
from .numeric import tensor as T
from .numeric.rng import Rng

ITERATIONS = 500
LEARNING_RATE = 0.1


def bag_of_tokens(docs, cfg=None):
    cfg = cfg or TokenizerConfig()
    X = np.zeros((len(docs), cfg.vocab_size))
    for i, d in enumerate(docs):
        for tok in tokenize_layout(d, cfg):
            X[i, tok] += 1.0
    return X


@dataclass
class Classifier:
    classes: list
    W: np.ndarray
    b: np.ndarray
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)

    def scores(self, X):
        return X @ self.W + self.b


def train_classifier(docs, labels, seed=0, tokenizer=None, sample_weights=None,
                     iterations=ITERATIONS, lr=LEARNING_RATE):
    """Multinomial logistic regression on token counts, full-batch descent.

    Samples are put in a canonical order first, so the model does not
    depend on the order of ``docs``.
    """
    tokenizer = tokenizer or TokenizerConfig()
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("train_classifier needs at least two classes")
    X = bag_of_tokens(docs, tokenizer)
    y = np.array([classes.index(l) for l in labels])
    w = np.ones(len(docs)) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    keys = [y, w] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    perm = np.lexsort(keys[::-1])
    X, y, w = X[perm], y[perm], w[perm]
    coef = -w / w.sum()

    rng = Rng(seed)
    V, C = X.shape[1], len(classes)
    W = T.Tensor(0.01 * rng.normal(V * C).reshape(V, C), requires_grad=True)
    b = T.Tensor(np.zeros(C), requires_grad=True)
    rows = np.arange(len(y))
    for _ in range(iterations):
        probs = T.softmax_rows(T.affine(X, W, b))
        picked = T.clip(probs[rows, y], T.PROB_EPS, 1.0)
        loss = T.sum(T.log(picked) * coef)
        T.backward(loss)
        W.data -= lr * W.grad
        b.data -= lr * b.grad
        W.zero_grad()
        b.zero_grad()
    return Classifier(classes, W.data.copy(), b.data.copy(), tokenizer)


def classify(clf, doc):
    return clf.classes[int(np.argmax(clf.scores(bag_of_tokens([doc], clf.tokenizer))[0]))]


def accuracy(clf, docs):
    if not docs:
        raise ValueError("empty evaluation set")
    pred = np.argmax(clf.scores(bag_of_tokens(docs, clf.tokenizer)), axis=1)
    truth = [clf.classes.index(d.label) if d.label in clf.classes else -1 for d in docs]
    return float(np.mean(pred == np.array(truth)))


def assign_labels(synthetic, real_train, tokenizer=None):
    """Label each synthetic layout by its nearest class centroid (cosine).

    Centroids are mean token histograms of the labelled real documents;
    ties go to the lowest class index in sorted class order.
    """
    tokenizer = tokenizer or TokenizerConfig()
    classes = sorted({d.label for d in real_train})
    Xr = bag_of_tokens(real_train, tokenizer)
    centroids = np.stack([Xr[[d.label == c for d in real_train]].mean(axis=0) for c in classes])
    cn = centroids / np.linalg.norm(centroids, axis=1, keepdims=True)
    Xs = bag_of_tokens(synthetic, tokenizer)
    sims = (Xs @ cn.T) / np.maximum(np.linalg.norm(Xs, axis=1, keepdims=True), 1e-300)
    return [replace(d, label=classes[int(np.argmax(s))]) for d, s in zip(synthetic, sims)]


@dataclass
class EvalReport:
    conditions: dict
    seeds: list

    def to_dict(self):
        return {"seeds": list(self.seeds), "conditions": self.conditions}


def _summary(accs):
    return {"accuracies": accs, "mean": float(np.mean(accs)), "std": float(np.std(accs))}


def compare_augmentation(real_train, synthetic, test, seeds, tokenizer=None):
    """Accuracy of real-only (A) vs real+synthetic (B) classifiers per seed."""
    if not test:
        raise ValueError("test set is empty")
    tokenizer = tokenizer or TokenizerConfig()
    labelled = assign_labels(synthetic, real_train, tokenizer) if synthetic else []
    augmented = list(real_train) + labelled
    acc_a, acc_b = [], []
    for seed in seeds:
        clf_a = train_classifier(real_train, [d.label for d in real_train], seed, tokenizer)
        acc_a.append(accuracy(clf_a, test))
        clf_b = train_classifier(augmented, [d.label for d in augmented], seed, tokenizer)
        acc_b.append(accuracy(clf_b, test))
    return EvalReport(
        conditions={"real_only": _summary(acc_a), "real_plus_synthetic": _summary(acc_b)},
        seeds=list(seeds),
    )


def jitter_baseline(real_train, magnitude, n, seed):
    """``n`` jittered resamples of real documents; labels are inherited."""
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    rng = Rng(seed)
    out = []
    for k in range(n):
        src = real_train[rng.randint(len(real_train))]
        out.append(jitter_document(src, magnitude, rng, new_id=f"jitter-{seed}-{k}"))
    return out

