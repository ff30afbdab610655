"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

from typing import List

import numpy as np


def check_text_array(X, name: str = "X") -> List[str]:
    """Validate a 1-d collection of non-empty strings; returns a list."""
    if isinstance(X, str):
        raise ValueError(f"{name} must be a sequence of strings, not a single string")
    texts = list(X)
    if not texts:
        raise ValueError(f"{name} must be non-empty")
    for i, text in enumerate(texts):
        if not isinstance(text, str):
            raise ValueError(f"{name}[{i}] is {type(text).__name__}, expected str")
    return texts


def check_labels(y, n_expected: int, name: str = "y", binary: bool = False) -> np.ndarray:
    """Validate labels: numeric 1-d of the expected length; {0,1} if binary."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if len(arr) != n_expected:
        raise ValueError(f"{name} has {len(arr)} entries, expected {n_expected}")
    arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if binary and not set(np.unique(arr)) <= {0.0, 1.0}:
        raise ValueError(f"{name} must be binary (0/1 or False/True)")
    return arr
