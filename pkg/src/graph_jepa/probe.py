"""Frozen-embedding extraction and linear downstream evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .training import prepare_graph

LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2)


class DegenerateFoldError(ValueError):
    pass


def graph_patch_encodings(g, model, cfg, graph_idx=0, use_ema=True):
    """All patches of one graph through the (EMA) target branch: p x d."""
    ps, pe = prepare_graph(g, cfg, graph_idx)
    h = model.embed_patches(ps, pe, use_ema=use_ema)
    z = model.encode_targets(h, use_ema=use_ema)
    return z.data


def embed_dataset(ds, model, cfg, use_ema=True):
    """One mean-pooled frozen embedding per graph: G x d."""
    rows = [
        graph_patch_encodings(g, model, cfg, gi, use_ema=use_ema).mean(axis=0)
        for gi, g in enumerate(ds.graphs)
    ]
    return np.stack(rows)


def _with_bias(x):
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


def ridge_fit(x, y, lam):
    """Closed-form ridge with an unpenalized bias column appended last."""
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    xb = _with_bias(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    reg = lam * np.eye(xb.shape[1])
    reg[-1, -1] = 0.0
    return np.linalg.solve(xb.T @ xb + reg, xb.T @ y)


def ridge_predict(w, x):
    return _with_bias(np.asarray(x, dtype=np.float64)) @ w


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _logreg_objective(w, xb, y_onehot, lam):
    probs = _softmax(xb @ w)
    nll = -np.mean(np.log(np.sum(probs * y_onehot, axis=1) + 1e-300))
    penalty = lam * np.sum(w[:-1] ** 2)
    grad = xb.T @ (probs - y_onehot) / xb.shape[0]
    grad[:-1] += 2 * lam * w[:-1]
    return nll + penalty, grad


def logreg_fit(x, y, lam, max_iter=500, tol=1e-6):
    """Multinomial logistic regression with L2 penalty (bias unpenalized),
    minimized by gradient descent with Armijo backtracking."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes = np.unique(y)
    if len(classes) < 2:
        raise DegenerateFoldError("fold contains a single class")
    remap = {c: i for i, c in enumerate(classes)}
    yi = np.array([remap[c] for c in y])
    xb = _with_bias(x)
    n, dims = xb.shape
    c = len(classes)
    onehot = np.zeros((n, c))
    onehot[np.arange(n), yi] = 1.0
    w = np.zeros((dims, c))
    f, g = _logreg_objective(w, xb, onehot, lam)
    step = 1.0
    for _ in range(max_iter):
        gnorm2 = float(np.sum(g * g))
        if np.sqrt(gnorm2) <= tol:
            break
        step = min(step * 2.0, 1e4)
        while step > 1e-12:
            w_new = w - step * g
            f_new, g_new = _logreg_objective(w_new, xb, onehot, lam)
            if f_new <= f - 0.5 * step * gnorm2:
                break
            step *= 0.5
        w, f, g = w_new, f_new, g_new
    return w, classes


def logreg_predict(w, classes, x):
    probs = _softmax(_with_bias(np.asarray(x, dtype=np.float64)) @ w)
    return classes[np.argmax(probs, axis=1)]


def stratified_folds(labels, folds, rng):
    """Round-robin within-class split; per-fold class counts deviate from the
    global proportions by at most one sample per class."""
    labels = np.asarray(labels)
    assignment = np.empty(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        idxs = np.flatnonzero(labels == c)
        idxs = idxs[rng.permutation(len(idxs))]
        for pos, i in enumerate(idxs):
            assignment[i] = pos % folds
    return [np.flatnonzero(assignment == f) for f in range(folds)]


def plain_folds(n, folds, rng):
    perm = rng.permutation(n)
    return [perm[f::folds] for f in range(folds)]


def _select_lambda_cls(x, y, rng, inner_folds=3, grid=LAMBDA_GRID):
    best_lam, best_acc = grid[0], -1.0
    splits = stratified_folds(y, min(inner_folds, len(x)), rng)
    for lam in grid:
        accs = []
        for f, test_idx in enumerate(splits):
            train_idx = np.setdiff1d(np.arange(len(x)), test_idx)
            if len(np.unique(np.asarray(y)[train_idx])) < 2 or len(test_idx) == 0:
                continue
            try:
                w, classes = logreg_fit(x[train_idx], np.asarray(y)[train_idx], lam,
                                        max_iter=200)
            except DegenerateFoldError:
                continue
            pred = logreg_predict(w, classes, x[test_idx])
            accs.append(float(np.mean(pred == np.asarray(y)[test_idx])))
        if accs and np.mean(accs) > best_acc:
            best_acc, best_lam = float(np.mean(accs)), lam
    return best_lam


def _select_lambda_reg(x, y, rng, inner_folds=3, grid=LAMBDA_GRID):
    best_lam, best_mse = grid[0], np.inf
    splits = plain_folds(len(x), min(inner_folds, len(x)), rng)
    for lam in grid:
        errs = []
        for test_idx in splits:
            train_idx = np.setdiff1d(np.arange(len(x)), test_idx)
            if len(test_idx) == 0 or len(train_idx) == 0:
                continue
            w = ridge_fit(x[train_idx], np.asarray(y, dtype=float)[train_idx], lam)
            pred = ridge_predict(w, x[test_idx])[:, 0]
            errs.append(float(np.mean((pred - np.asarray(y, dtype=float)[test_idx]) ** 2)))
        if errs and np.mean(errs) < best_mse:
            best_mse, best_lam = float(np.mean(errs)), lam
    return best_lam


@dataclass(frozen=True)
class ProbeReport:
    task: str
    metric: str        # "accuracy" | "mse"
    per_fold: tuple    # dicts: run, fold, value, lambda, skipped, extras
    mean: float
    std: float
    folds: int
    runs: int

    def to_dict(self):
        return {
            "task": self.task,
            "metric": self.metric,
            "mean": self.mean,
            "std": self.std,
            "folds": self.folds,
            "runs": self.runs,
            "per_fold": list(self.per_fold),
        }


def cross_validate(ds, model, cfg, folds=10, runs=5, seeds=None):
    """k-fold cross-validation of the linear probe on frozen embeddings,
    repeated over several seeds; stratified folds for classification."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(ds) < folds:
        raise ValueError(f"dataset of {len(ds)} graphs smaller than {folds} folds")
    if seeds is None:
        seeds = list(range(runs))
    x = embed_dataset(ds, model, cfg)
    labels = ds.labels()
    records = []
    values = []
    if ds.task == "classification":
        y = np.asarray([int(l) for l in labels])
        for run, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            for fold, test_idx in enumerate(stratified_folds(y, folds, rng)):
                train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
                rec = {"run": run, "fold": fold, "skipped": False}
                try:
                    lam = _select_lambda_cls(x[train_idx], y[train_idx], rng)
                    w, classes = logreg_fit(x[train_idx], y[train_idx], lam)
                except DegenerateFoldError:
                    rec["skipped"] = True
                    records.append(rec)
                    continue
                pred = logreg_predict(w, classes, x[test_idx])
                rec["value"] = float(np.mean(pred == y[test_idx]))
                rec["lambda"] = lam
                values.append(rec["value"])
                records.append(rec)
        metric = "accuracy"
    else:
        y = np.asarray([float(l) for l in labels])
        for run, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            for fold, test_idx in enumerate(plain_folds(len(y), folds, rng)):
                train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
                lam = _select_lambda_reg(x[train_idx], y[train_idx], rng)
                w = ridge_fit(x[train_idx], y[train_idx], lam)
                pred = ridge_predict(w, x[test_idx])[:, 0]
                mse = float(np.mean((pred - y[test_idx]) ** 2))
                mae = float(np.mean(np.abs(pred - y[test_idx])))
                records.append(
                    {"run": run, "fold": fold, "skipped": False,
                     "value": mse, "mae": mae, "lambda": lam}
                )
                values.append(mse)
        metric = "mse"
    return ProbeReport(
        task=ds.task,
        metric=metric,
        per_fold=tuple(records),
        mean=float(np.mean(values)),
        std=float(np.std(values)),
        folds=folds,
        runs=len(seeds),
    )
