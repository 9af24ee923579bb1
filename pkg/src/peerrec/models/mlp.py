"""Two-hidden-layer MLP ranker trained with pointwise binary cross-entropy."""
from __future__ import annotations

import logging

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..features import ColumnStandardizer
from .optim import Adam, one_cycle_schedule

logger = logging.getLogger(__name__)

_LO = np.nextafter(0.0, 1.0)
_HI = np.nextafter(1.0, 0.0)

STUDY_PARAMS = dict(hidden_units=100, dropout=0.1, weight_decay=0.0)
TUNED_PARAMS = dict(hidden_units=300, dropout=0.5, weight_decay=1e-4)
SEARCH_GRID = {
    "hidden_units": (100, 300, 500),
    "dropout": (0.1, 0.5, 0.9),
    "weight_decay": (0.0, 1e-4, 1e-2),
}


def bce_with_logits(z, y):
    """Mean binary cross-entropy computed stably from logits."""
    return float(np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def forward(coefs, intercepts, X, masks=None):
    """Returns (logits, activations); ``masks`` are inverted-dropout multipliers per hidden layer."""
    acts = [X]
    h = X
    for i, (W, b) in enumerate(zip(coefs[:-1], intercepts[:-1])):
        h = np.maximum(h @ W + b, 0.0)
        if masks is not None:
            h = h * masks[i]
        acts.append(h)
    z = (h @ coefs[-1] + intercepts[-1]).ravel()
    return z, acts


def loss_and_grad(coefs, intercepts, X, y, weight_decay=0.0, masks=None):
    """BCE (+ 0.5 * weight_decay * ||params||^2) and its gradients by backpropagation."""
    z, acts = forward(coefs, intercepts, X, masks)
    n = len(y)
    loss = bce_with_logits(z, y)
    delta = ((expit(z) - y) / n)[:, None]
    g_coefs = [None] * len(coefs)
    g_ints = [None] * len(coefs)
    for i in range(len(coefs) - 1, -1, -1):
        g_coefs[i] = acts[i].T @ delta
        g_ints[i] = delta.sum(axis=0)
        if i:
            delta = delta @ coefs[i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (acts[i] > 0)
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float(np.sum(p * p)) for p in (*coefs, *intercepts))
        g_coefs = [g + weight_decay * W for g, W in zip(g_coefs, coefs)]
        g_ints = [g + weight_decay * b for g, b in zip(g_ints, intercepts)]
    return loss, g_coefs, g_ints


def holdout_split(groups, fraction, rng):
    """Boolean hold-out mask selecting whole groups."""
    uniq = np.unique(groups)
    n_hold = int(np.ceil(fraction * len(uniq))) if len(uniq) >= 2 and fraction > 0 else 0
    n_hold = min(n_hold, len(uniq) - 1)
    chosen = rng.choice(uniq, size=n_hold, replace=False) if n_hold else np.asarray([], dtype=uniq.dtype)
    return np.isin(groups, chosen)


class MLPRanker(BaseEstimator, ClassifierMixin):
    """Sigmoid-output MLP trained with Adam under a one-cycle schedule.

    ``fit`` keeps the weights from the epoch with the lowest hold-out loss;
    epoch 0 in ``trace_`` is the untrained initialization. Hold-out rows are
    chosen by whole ``groups`` (one group per initiation).
    """

    def __init__(self, hidden_units=100, n_hidden_layers=2, dropout=0.1, weight_decay=0.0,
                 max_lr=0.01, epochs=1000, holdout_fraction=0.01, batch_size=None,
                 scale_columns=None, random_state=0):
        self.hidden_units = hidden_units
        self.n_hidden_layers = n_hidden_layers
        self.dropout = dropout
        self.weight_decay = weight_decay
        self.max_lr = max_lr
        self.epochs = epochs
        self.holdout_fraction = holdout_fraction
        self.batch_size = batch_size
        self.scale_columns = scale_columns
        self.random_state = random_state

    def _init_params(self, n_in, rng):
        sizes = [n_in] + [int(self.hidden_units)] * int(self.n_hidden_layers) + [1]
        coefs, intercepts = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = 6.0 if i < len(sizes) - 2 else 1.0
            bound = np.sqrt(gain / fan_in)
            coefs.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            intercepts.append(np.zeros(fan_out))
        return coefs, intercepts

    def _dropout_masks(self, n_rows, rng):
        p = float(self.dropout)
        if p <= 0:
            return None
        keep = 1.0 - p
        return [(rng.random((n_rows, int(self.hidden_units))) < keep) / keep
                for _ in range(int(self.n_hidden_layers))]

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.float64)
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("labels must be 0/1")
        if y.min() == y.max():
            raise ValueError("need at least one positive and one negative sample")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        rng = np.random.default_rng(self.random_state)
        groups = np.arange(len(y)) if groups is None else np.asarray(groups)
        hold = holdout_split(groups, self.holdout_fraction, rng)
        if not hold.any():
            logger.warning("hold-out set is empty; using training loss for model selection")

        self.standardizer_ = ColumnStandardizer(self.scale_columns).fit(X[~hold])
        Xs = self.standardizer_.transform(X)
        Xtr, ytr = Xs[~hold], y[~hold]
        Xho, yho = (Xs[hold], y[hold]) if hold.any() else (Xtr, ytr)

        coefs, intercepts = self._init_params(X.shape[1], rng)
        params = coefs + intercepts
        opt = Adam(params, weight_decay=float(self.weight_decay))
        n = len(ytr)
        bs = n if not self.batch_size else min(int(self.batch_size), n)
        n_batches = int(np.ceil(n / bs))
        lrs = one_cycle_schedule(float(self.max_lr), int(self.epochs) * n_batches)

        def holdout_loss():
            return bce_with_logits(forward(coefs, intercepts, Xho)[0], yho)

        best = holdout_loss()
        best_epoch, best_params = 0, [p.copy() for p in params]
        train_hist, hold_hist = [bce_with_logits(forward(coefs, intercepts, Xtr)[0], ytr)], [best]
        step = 0
        nl = len(coefs)
        for epoch in range(1, int(self.epochs) + 1):
            order = rng.permutation(n) if n_batches > 1 else np.arange(n)
            total = 0.0
            for b in range(n_batches):
                idx = order[b * bs:(b + 1) * bs]
                masks = self._dropout_masks(len(idx), rng)
                loss, gc, gi = loss_and_grad(coefs, intercepts, Xtr[idx], ytr[idx], masks=masks)
                if not np.isfinite(loss):
                    raise FloatingPointError(
                        f"non-finite training loss at epoch {epoch}, batch {b} (lr={lrs[step]:.3g})")
                opt.step(gc + gi, lrs[step])
                step += 1
                total += loss * len(idx)
            hl = holdout_loss()
            if not np.isfinite(hl):
                raise FloatingPointError(f"non-finite hold-out loss at epoch {epoch}")
            train_hist.append(total / n)
            hold_hist.append(hl)
            if hl < best:
                best, best_epoch = hl, epoch
                best_params = [p.copy() for p in params]

        self.coefs_ = best_params[:nl]
        self.intercepts_ = best_params[nl:]
        self.best_epoch_ = best_epoch
        self.trace_ = {
            "train_loss": np.asarray(train_hist),
            "holdout_loss": np.asarray(hold_hist),
            "lr": lrs,
            "holdout_is_train": not hold.any(),
        }
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.asarray([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coefs_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forward(self.coefs_, self.intercepts_, self.standardizer_.transform(X))[0]

    def predict_score(self, X):
        """Positive-class probability, kept inside the open interval (0, 1)."""
        return np.clip(expit(self.decision_function(X)), _LO, _HI)

    def predict_proba(self, X):
        p = self.predict_score(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)
