"""Logistic-regression reference classifier on per-window summary statistics."""

from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler


def window_features(X: np.ndarray) -> np.ndarray:
    """Per channel: mean, SD and last-quarter minus first-quarter mean. X is (n, T, C)."""
    X = np.asarray(X, dtype=float)
    q = max(1, X.shape[1] // 4)
    delta = X[:, -q:, :].mean(axis=1) - X[:, :q, :].mean(axis=1)
    return np.concatenate([X.mean(axis=1), X.std(axis=1), delta], axis=1)


class LogisticBaseline:
    def __init__(self, seed: int = 0, C: float = 1.0):
        self.pipe = make_pipeline(StandardScaler(), LogisticRegression(C=C, max_iter=1000, random_state=seed))

    def fit(self, X, y) -> "LogisticBaseline":
        self.pipe.fit(window_features(X), np.asarray(y))
        return self

    def score(self, X) -> np.ndarray:
        """Decision value; higher means more likely NVI (label 1)."""
        return self.pipe.decision_function(window_features(X))
