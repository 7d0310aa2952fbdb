"""Mask volumes, the lung-to-bundle volume regression, and QA verdicts.

An ordinary least squares line predicts the bundle volume from the lung
volume.  A measurement is acceptable when it falls inside the two-sided
prediction interval for a new observation and survives the Chauvenet
criterion on its standardized residual; otherwise the verdict names the
direction of the suspected segmentation error and the regression estimate
is reported as the substitute value.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ParameterError
from .grid import BinaryMask

MODEL_SCHEMA = "bronco-regression-v1"


def mask_volume(mask: BinaryMask) -> float:
    """Voxel count times voxel volume, in ml."""
    return mask.count * mask.voxel_volume_mm3 / 1000.0


@dataclass
class RegressionModel:
    slope: float
    intercept: float
    n: int
    residual_std: float
    mean_x: float
    sxx: float

    def to_json_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "slope": self.slope,
            "intercept": self.intercept,
            "n": self.n,
            "residual_std": self.residual_std,
            "mean_x": self.mean_x,
            "sxx": self.sxx,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "RegressionModel":
        d = json.loads(text)
        if d.get("schema") != MODEL_SCHEMA:
            raise ParameterError(f"unexpected regression model schema {d.get('schema')!r}")
        return cls(
            slope=float(d["slope"]),
            intercept=float(d["intercept"]),
            n=int(d["n"]),
            residual_std=float(d["residual_std"]),
            mean_x=float(d["mean_x"]),
            sxx=float(d["sxx"]),
        )


def fit_regression(pairs) -> RegressionModel:
    """OLS fit of bundle volume on lung volume; residual std uses n-2 dof."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParameterError("pairs must be a sequence of (lung_ml, bundle_ml)")
    n = len(arr)
    if n < 3:
        raise ParameterError(f"need at least 3 pairs, got {n}")
    x, y = arr[:, 0], arr[:, 1]
    mean_x = float(x.mean())
    sxx = float(((x - mean_x) ** 2).sum())
    if sxx == 0.0:
        raise ParameterError("all lung volumes are equal; slope is undefined")
    slope = float(((x - mean_x) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * mean_x)
    resid = y - (slope * x + intercept)
    residual_std = float(np.sqrt((resid**2).sum() / (n - 2)))
    return RegressionModel(slope, intercept, n, residual_std, mean_x, sxx)


def predict_with_interval(model: RegressionModel, lung_volume: float,
                          level: float = 0.95) -> tuple[float, float, float]:
    """Estimate and two-sided prediction interval for a new observation."""
    if not 0.0 < level < 1.0:
        raise ParameterError(f"level must be in (0, 1), got {level}")
    x = float(lung_volume)
    est = model.slope * x + model.intercept
    t = float(stats.t.ppf(0.5 + level / 2.0, model.n - 2))
    se = model.residual_std * math.sqrt(1.0 + 1.0 / model.n + (x - model.mean_x) ** 2 / model.sxx)
    return est, est - t * se, est + t * se


def chauvenet_flag(model: RegressionModel, x: float, y: float) -> bool:
    """Chauvenet criterion on the regression residual: flag when the expected
    number of equally extreme values among n observations is below 1/2."""
    est = model.slope * float(x) + model.intercept
    if model.residual_std == 0.0:
        return y != est
    z = abs(float(y) - est) / model.residual_std
    return model.n * math.erfc(z / math.sqrt(2.0)) < 0.5


@dataclass
class QaVerdict:
    measured_volume: float
    predicted_volume: float
    interval: tuple[float, float]
    chauvenet: bool
    verdict: str  # ok | suspected_oversegmentation | suspected_undersegmentation
    level: float

    def to_json_dict(self) -> dict:
        return {
            "measured_ml": self.measured_volume,
            "predicted_ml": self.predicted_volume,
            "interval_ml": list(self.interval),
            "level": self.level,
            "chauvenet_flag": self.chauvenet,
            "verdict": self.verdict,
        }


def qa_verdict(model: RegressionModel, lung_volume: float, bundle_volume: float,
               level: float = 0.95) -> QaVerdict:
    """ok iff the measured volume sits inside the prediction interval and the
    Chauvenet flag is clear; otherwise the residual sign names the suspicion."""
    est, lo, hi = predict_with_interval(model, lung_volume, level)
    flag = chauvenet_flag(model, lung_volume, bundle_volume)
    measured = float(bundle_volume)
    if lo <= measured <= hi and not flag:
        verdict = "ok"
    elif measured >= est:
        verdict = "suspected_oversegmentation"
    else:
        verdict = "suspected_undersegmentation"
    return QaVerdict(measured, est, (lo, hi), flag, verdict, level)
