"""Dot-product matrix factorization over (author, site) ids."""
from collections import Counter

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .mlp import bce_with_logits
from .optim import Adam, one_cycle_schedule

UNSEEN = 0


class MatrixFactorization(BaseEstimator):
    """Author and site embeddings scored by their dot product.

    Ids seen fewer than ``min_occurrence`` times share one reserved
    embedding (row 0) per side.
    """

    def __init__(self, embedding_dim=128, weight_decay=1e-4, epochs=100, min_occurrence=2,
                 max_lr=0.01, random_state=0):
        self.embedding_dim = embedding_dim
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.min_occurrence = min_occurrence
        self.max_lr = max_lr
        self.random_state = random_state

    def fit(self, authors, sites, y, occurrences=None):
        """``occurrences``: iterable of (author, site) pairs used to build the vocabularies
        (defaults to the positive training rows)."""
        y = np.asarray(y, dtype=np.float64)
        if len(authors) != len(y) or len(sites) != len(y):
            raise ValueError("authors, sites and y must have equal length")
        if occurrences is None:
            occurrences = [(a, s) for a, s, lab in zip(authors, sites, y) if lab == 1]
        a_count = Counter(a for a, _ in occurrences)
        s_count = Counter(s for _, s in occurrences)
        self.author_vocab_ = {a: i + 1 for i, a in enumerate(sorted(k for k, c in a_count.items() if c >= self.min_occurrence))}
        self.site_vocab_ = {s: i + 1 for i, s in enumerate(sorted(k for k, c in s_count.items() if c >= self.min_occurrence))}
        ai = self._codes(self.author_vocab_, authors)
        si = self._codes(self.site_vocab_, sites)

        rng = np.random.default_rng(self.random_state)
        d = int(self.embedding_dim)
        scale = 1.0 / np.sqrt(d)
        A = rng.normal(0.0, scale, size=(len(self.author_vocab_) + 1, d))
        S = rng.normal(0.0, scale, size=(len(self.site_vocab_) + 1, d))
        opt = Adam([A, S], weight_decay=float(self.weight_decay))
        lrs = one_cycle_schedule(float(self.max_lr), int(self.epochs))
        losses = []
        n = len(y)
        for epoch in range(int(self.epochs)):
            z = np.einsum("ij,ij->i", A[ai], S[si])
            losses.append(bce_with_logits(z, y))
            g = ((expit(z) - y) / n)[:, None]
            gA = np.zeros_like(A)
            gS = np.zeros_like(S)
            np.add.at(gA, ai, g * S[si])
            np.add.at(gS, si, g * A[ai])
            opt.step([gA, gS], lrs[epoch])
        self.author_embeddings_ = A
        self.site_embeddings_ = S
        self.loss_curve_ = np.asarray(losses)
        return self

    @staticmethod
    def _codes(vocab, ids):
        return np.fromiter((vocab.get(i, UNSEEN) for i in ids), dtype=np.int64, count=len(ids))

    def score_matrix(self, authors, sites):
        """Dot products for every (author, site) combination, shape (len(authors), len(sites))."""
        check_is_fitted(self, "author_embeddings_")
        A = self.author_embeddings_[self._codes(self.author_vocab_, authors)]
        S = self.site_embeddings_[self._codes(self.site_vocab_, sites)]
        return A @ S.T

    def decision_function(self, authors, sites):
        check_is_fitted(self, "author_embeddings_")
        A = self.author_embeddings_[self._codes(self.author_vocab_, authors)]
        S = self.site_embeddings_[self._codes(self.site_vocab_, sites)]
        return np.einsum("ij,ij->i", A, S)
