"""Recovery-quality metrics: MSE, PSNR and SNR."""
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

INF_SENTINEL = "inf"


def _pair(X0, Xrev):
    X0 = np.asarray(X0, dtype=np.float64)
    Xrev = np.asarray(Xrev, dtype=np.float64)
    if X0.shape != Xrev.shape:
        raise InvalidArgumentError(f"shape mismatch: {X0.shape} vs {Xrev.shape}")
    if X0.size == 0:
        raise InvalidArgumentError("empty matrices")
    return X0, Xrev


def mse(X0, Xrev):
    """``||X0 - Xrev||_F^2 / (d n)``."""
    X0, Xrev = _pair(X0, Xrev)
    R = X0 - Xrev
    return float(np.sum(R * R)) / R.size


def psnr(X0, Xrev, peak=255.0):
    """Peak signal-to-noise ratio in dB; ``inf`` when the matrices coincide."""
    e = mse(X0, Xrev)
    if e == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / e)


def snr(X0, Xrev):
    """``10 log10(||X0||^2 / ||X0 - Xrev||^2)``; ``inf`` on exact recovery."""
    X0, Xrev = _pair(X0, Xrev)
    sig = float(np.sum(X0 * X0))
    if sig == 0.0:
        raise InvalidArgumentError("snr is undefined for a zero reference matrix")
    R = X0 - Xrev
    res = float(np.sum(R * R))
    if res == 0.0:
        return math.inf
    return 10.0 * math.log10(sig / res)


def _enc(v):
    if isinstance(v, float) and not math.isfinite(v):
        if math.isnan(v):
            return "nan"
        return INF_SENTINEL if v > 0 else "-inf"
    return v


def _dec(v):
    if v == "nan":
        return math.nan
    if v == INF_SENTINEL:
        return math.inf
    if v == "-inf":
        return -math.inf
    return v


@dataclass
class MetricsReport:
    mse: float
    psnr_db: float
    snr_db: float
    per_column_error: np.ndarray
    corrupted_only: "MetricsReport | None" = None

    @property
    def n_columns(self):
        return int(len(self.per_column_error))

    @classmethod
    def compute(cls, X0, Xrev, peak=255.0, mask=None):
        """Metrics over all columns and, if ``mask`` is given, over the masked columns only."""
        X0, Xrev = _pair(X0, Xrev)
        if X0.ndim == 1:
            X0, Xrev = X0[:, None], Xrev[:, None]
        per_col = np.sqrt(np.sum((X0 - Xrev) ** 2, axis=0))
        sub = None
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (X0.shape[1],):
                raise InvalidArgumentError(f"mask has shape {mask.shape}, expected {(X0.shape[1],)}")
            if mask.any():
                sub = cls.compute(X0[:, mask], Xrev[:, mask], peak)
        snr_db = snr(X0, Xrev) if np.any(X0) else math.nan
        return cls(mse(X0, Xrev), psnr(X0, Xrev, peak), snr_db, per_col, sub)

    def to_dict(self):
        d = {
            "mse": self.mse,
            "psnr_db": _enc(self.psnr_db),
            "snr_db": _enc(self.snr_db),
            "n_columns": self.n_columns,
            "corrupted_only": self.corrupted_only.to_dict() if self.corrupted_only else None,
        }
        d["per_column_error"] = [float(v) for v in self.per_column_error]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        sub = d.get("corrupted_only")
        return cls(float(d["mse"]), float(_dec(d["psnr_db"])), float(_dec(d["snr_db"])),
                   np.asarray(d.get("per_column_error", []), dtype=np.float64),
                   cls.from_dict(sub) if sub else None)
