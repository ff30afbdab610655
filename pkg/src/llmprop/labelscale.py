"""Label normalization fitted on training labels only.

Supports the three regression-target transforms (z-score, min-max,
log(1+y)) plus an identity passthrough, each with an exact algebraic
inverse so evaluation can report errors in original units.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

METHODS = ("z_score", "min_max", "log_norm", "identity")


class ScalerFitError(ValueError):
    """Raised when statistics cannot be fit (e.g. constant labels)."""


class LabelScaler(BaseEstimator, TransformerMixin):
    """Scalar label scaler with forward and exact inverse maps.

    Statistics (mean/std for z_score, extrema for min_max) are computed on
    the labels passed to :meth:`fit` - in the pipeline that is always the
    training split, never validation or test. The standard deviation is the
    population one (divide by N).

    Parameters
    ----------
    method : one of "z_score", "min_max", "log_norm", "identity"
    """

    def __init__(self, method: str = "z_score"):
        self.method = method

    def fit(self, y):
        if self.method not in METHODS:
            raise ValueError(f"unknown scaling method {self.method!r}")
        y = np.asarray(y, dtype=np.float64).ravel()
        if self.method in ("z_score", "min_max") and y.size < 2:
            raise ScalerFitError(f"{self.method} needs at least 2 labels, got {y.size}")
        if self.method == "log_norm" and y.size and np.min(y) <= -1.0:
            raise ScalerFitError("log_norm requires all labels > -1")
        self.mu_ = None
        self.sigma_ = None
        self.y_min_ = None
        self.y_max_ = None
        if self.method == "z_score":
            self.mu_ = float(np.mean(y))
            self.sigma_ = float(np.std(y))  # population std
            if self.sigma_ <= 0.0:
                raise ScalerFitError("z_score is undefined for constant labels (sigma = 0)")
        elif self.method == "min_max":
            self.y_min_ = float(np.min(y))
            self.y_max_ = float(np.max(y))
            if self.y_max_ <= self.y_min_:
                raise ScalerFitError("min_max is undefined for constant labels (y_max = y_min)")
        self.fitted_on_ = int(y.size)
        return self

    def _check_fitted(self):
        if not hasattr(self, "fitted_on_"):
            raise NotFittedError("LabelScaler must be fit before use")

    def transform(self, y):
        """Map labels into scaled space; accepts scalars or arrays."""
        self._check_fitted()
        scalar = np.isscalar(y)
        y = np.asarray(y, dtype=np.float64)
        if self.method == "z_score":
            out = (y - self.mu_) / self.sigma_
        elif self.method == "min_max":
            out = (y - self.y_min_) / (self.y_max_ - self.y_min_)
        elif self.method == "log_norm":
            if np.any(y <= -1.0):
                raise ValueError("log_norm transform requires y > -1")
            out = np.log1p(y)
        else:
            out = y + 0.0
        return float(out) if scalar else out

    def inverse_transform(self, y_hat):
        """Exact algebraic inverse of :meth:`transform`."""
        self._check_fitted()
        scalar = np.isscalar(y_hat)
        y_hat = np.asarray(y_hat, dtype=np.float64)
        if self.method == "z_score":
            out = y_hat * self.sigma_ + self.mu_
        elif self.method == "min_max":
            out = y_hat * (self.y_max_ - self.y_min_) + self.y_min_
        elif self.method == "log_norm":
            out = np.expm1(y_hat)
        else:
            out = y_hat + 0.0
        return float(out) if scalar else out

    # --- persistence (structured text inside checkpoint directories) ---

    def to_text(self) -> str:
        """Serialize method plus statistics at full precision."""
        self._check_fitted()
        lines = [f"method = {self.method}", f"fitted_on = {self.fitted_on_}"]
        for name in ("mu_", "sigma_", "y_min_", "y_max_"):
            val = getattr(self, name)
            if val is not None:
                lines.append(f"{name.rstrip('_')} = {val!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LabelScaler":
        fields: dict = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            fields[key.strip()] = val.strip()
        scaler = cls(method=fields["method"])
        scaler.mu_ = float(fields["mu"]) if "mu" in fields else None
        scaler.sigma_ = float(fields["sigma"]) if "sigma" in fields else None
        scaler.y_min_ = float(fields["y_min"]) if "y_min" in fields else None
        scaler.y_max_ = float(fields["y_max"]) if "y_max" in fields else None
        scaler.fitted_on_ = int(fields["fitted_on"])
        return scaler

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LabelScaler":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def fit_scaler(labels, method: str = "z_score") -> LabelScaler:
    """Convenience wrapper: fit a fresh scaler on training labels."""
    return LabelScaler(method=method).fit(labels)
