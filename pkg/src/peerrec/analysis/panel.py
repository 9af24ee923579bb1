"""Unit-level outcome panels: treatment, covariates, outcome."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class PanelError(ValueError):
    pass


@dataclass
class OutcomePanel:
    """One row per unit. ``A`` has one named column per covariate."""

    units: list
    T: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    covariates: list = field(default_factory=list)
    pre_weeks: float = 5.0
    post_weeks: float = 13.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.units = list(self.units)
        self.T = np.asarray(self.T, dtype=float).ravel()
        self.Y = np.asarray(self.Y, dtype=float).ravel()
        n = len(self.T)
        self.A = np.asarray(self.A, dtype=float).reshape(n, -1) if n else np.zeros((0, len(self.covariates)))
        self.covariates = list(self.covariates)
        if not (len(self.units) == n == len(self.Y) == self.A.shape[0]):
            raise PanelError("units, T, A and Y must have the same number of rows")
        if self.A.shape[1] != len(self.covariates):
            raise PanelError(f"{self.A.shape[1]} covariate columns but {len(self.covariates)} names")
        if not np.isin(self.T, (0.0, 1.0)).all():
            raise PanelError("T must be 0/1")
        if not (np.isfinite(self.A).all() and np.isfinite(self.Y).all()):
            raise PanelError("panel contains missing or non-finite values")
        if self.pre_weeks <= 0 or self.post_weeks <= 0:
            raise PanelError("window lengths must be positive")

    def __len__(self):
        return len(self.T)

    @property
    def n_treated(self):
        return int(self.T.sum())

    @property
    def n_control(self):
        return len(self.T) - self.n_treated

    def check_treatment_varies(self):
        if self.n_treated == 0 or self.n_control == 0:
            raise PanelError("treatment is constant; need both treated and control units")

    def take(self, rows):
        rows = np.asarray(rows)
        return OutcomePanel([self.units[i] for i in rows.tolist()], self.T[rows], self.A[rows], self.Y[rows],
                            self.covariates, self.pre_weeks, self.post_weeks, dict(self.meta))

    def select(self, covariates):
        cols = [self.covariates.index(c) for c in covariates]
        return OutcomePanel(self.units, self.T, self.A[:, cols], self.Y, list(covariates),
                            self.pre_weeks, self.post_weeks, dict(self.meta))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# pre_weeks={self.pre_weeks!r} post_weeks={self.post_weeks!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unit", "T", *self.covariates, "Y"])
            for u, t, a, y in zip(self.units, self.T, self.A, self.Y):
                w.writerow([u, int(t), *map(repr, a.tolist()), repr(float(y))])

    @classmethod
    def from_csv(cls, path):
        pre, post = 5.0, 13.0
        with open(path, newline="", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if lines and lines[0].startswith("#"):
            for tok in lines[0][1:].split():
                k, _, v = tok.partition("=")
                if k == "pre_weeks":
                    pre = float(v)
                elif k == "post_weeks":
                    post = float(v)
            lines = lines[1:]
        rows = list(csv.reader(lines))
        if not rows:
            raise PanelError(f"{path}: empty panel")
        head = rows[0]
        if len(head) < 3 or head[0] != "unit" or head[1] != "T" or head[-1] != "Y":
            raise PanelError(f"{path}: header must be unit,T,<covariates...>,Y")
        covs = head[2:-1]
        units, T, A, Y = [], [], [], []
        for lineno, r in enumerate(rows[1:], start=2):
            if len(r) != len(head) or any(c.strip() == "" for c in r):
                raise PanelError(f"{path}: row {lineno} has missing values")
            try:
                T.append(float(r[1]))
                A.append([float(c) for c in r[2:-1]])
                Y.append(float(r[-1]))
            except ValueError as e:
                raise PanelError(f"{path}: row {lineno}: {e}") from None
            units.append(r[0])
        return cls(units, np.asarray(T), np.asarray(A).reshape(len(T), len(covs)), np.asarray(Y), covs, pre, post)
