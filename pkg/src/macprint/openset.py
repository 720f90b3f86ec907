"""OpenMax-style open-set calibration.

Per known class: mean activation vector (MAV) of correctly classified
training samples and a Weibull model of the largest distances to it. At
inference each class probability is scaled by a confidence
``c_h = 1 - WeibullCDF(||av - MAV_h||)`` and the removed mass becomes the
probability of an unseen class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ETA = 20
DEFAULT_DELTA = 0.5
DEGENERATE_SHAPE = 10.0


class OpenSetError(ValueError):
    pass


# ------------------------------------------------------------------ Weibull

def weibull_cdf(x, shape: float, scale: float):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    with np.errstate(over="ignore"):
        return -np.expm1(-((x / scale) ** shape))


def _shape_equation(k: float, y: np.ndarray, ln_y: np.ndarray, mean_ln: float) -> float:
    yk = y**k
    return float((yk * ln_y).sum() / yk.sum() - 1.0 / k - mean_ln)


def fit_weibull(x, tol: float = 1e-10, max_iter: int = 200) -> tuple[float, float]:
    """Two-parameter Weibull MLE; returns ``(shape, scale)``.

    The shape solves the profile-likelihood equation by bisection; the scale
    then follows in closed form. Identical samples get the degenerate fit
    ``(10, x + 1e-6)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if len(x) == 0:
        raise OpenSetError("cannot fit a Weibull model to no data")
    top = x.max()
    if top <= 0 or np.ptp(x) <= 1e-12 * max(top, 1.0):
        return DEGENERATE_SHAPE, float(top) + 1e-6

    # the shape is scale-free, so work on x / max(x) for numerical range
    y = np.maximum(x / top, 1e-300)
    ln_y = np.log(y)
    mean_ln = float(ln_y.mean())

    lo, hi = 1e-3, 1.0
    while _shape_equation(hi, y, ln_y, mean_ln) < 0:
        lo, hi = hi, hi * 2
        if hi > 1e6:
            return DEGENERATE_SHAPE, float(top) + 1e-6
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if _shape_equation(mid, y, ln_y, mean_ln) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, mid):
            break
    k = 0.5 * (lo + hi)
    scale = top * float(np.mean(y**k)) ** (1.0 / k)
    return k, scale


# ----------------------------------------------------------- per-class model

@dataclass
class ClassStatistics:
    mav: np.ndarray
    shape: float
    scale: float
    tail_size: int


def fit_class_stats(activations: np.ndarray, eta: int = DEFAULT_ETA) -> ClassStatistics:
    activations = np.asarray(activations, dtype=float)
    if activations.ndim != 2 or len(activations) < 2:
        raise OpenSetError("need at least 2 correctly classified samples per class")
    mav = activations.mean(axis=0)
    dist = np.linalg.norm(activations - mav, axis=1)
    tail = min(eta, len(dist))
    shape, scale = fit_weibull(np.sort(dist)[-tail:])
    return ClassStatistics(mav, shape, scale, tail)


def confidence(stats: ClassStatistics, av: np.ndarray) -> np.ndarray:
    """Confidence of ``av`` (one vector or a batch) belonging to the class."""
    av = np.asarray(av, dtype=float)
    if av.shape[-1] != stats.mav.shape[0]:
        raise OpenSetError("activation width does not match the class MAV")
    dist = np.linalg.norm(av - stats.mav, axis=-1)
    return np.clip(1.0 - weibull_cdf(dist, stats.shape, stats.scale), 0.0, 1.0)


def calibrate(q: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Scale class probabilities by confidences and append the unknown mass."""
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    if q.shape != c.shape:
        raise OpenSetError("probability and confidence vectors differ in shape")
    known = q * c
    unknown = (q * (1.0 - c)).sum(axis=-1, keepdims=True)
    return np.concatenate([known, unknown], axis=-1)


def decide(qhat: np.ndarray, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Class index per row, or ``H`` (the last slot) for unknown.

    Unknown iff the unknown mass exceeds ``delta``; otherwise the argmax of
    the known slots, ties resolved toward the lower index.
    """
    if not 0.0 < delta < 1.0:
        raise OpenSetError("delta must lie in (0, 1)")
    qhat = np.asarray(qhat, dtype=float)
    h = qhat.shape[-1] - 1
    best = np.argmax(qhat[..., :h], axis=-1)
    return np.where(qhat[..., h] > delta, h, best)


@dataclass
class OpenSetModel:
    classes: list[ClassStatistics]
    delta: float = DEFAULT_DELTA
    eta: int = DEFAULT_ETA

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def confidences(self, activations: np.ndarray) -> np.ndarray:
        return np.stack([confidence(s, activations) for s in self.classes], axis=-1)

    def calibrate(self, probs: np.ndarray, activations: np.ndarray) -> np.ndarray:
        return calibrate(probs, self.confidences(activations))

    def predict(self, probs: np.ndarray, activations: np.ndarray, delta: float | None = None) -> np.ndarray:
        return decide(self.calibrate(probs, activations), self.delta if delta is None else delta)

    def to_arrays(self) -> tuple[dict, dict[str, np.ndarray]]:
        meta = {"delta": self.delta, "eta": self.eta}
        arrays = {
            "openset.mav": np.stack([s.mav for s in self.classes]),
            "openset.shape": np.array([s.shape for s in self.classes]),
            "openset.scale": np.array([s.scale for s in self.classes]),
            "openset.tail": np.array([s.tail_size for s in self.classes], dtype=np.int64),
        }
        return meta, arrays

    @classmethod
    def from_arrays(cls, meta: dict, arrays: dict[str, np.ndarray]) -> "OpenSetModel":
        stats = [
            ClassStatistics(mav, float(k), float(lam), int(t))
            for mav, k, lam, t in zip(
                arrays["openset.mav"], arrays["openset.shape"], arrays["openset.scale"], arrays["openset.tail"]
            )
        ]
        return cls(stats, delta=meta["delta"], eta=meta["eta"])


def fit_openset(
    activations: np.ndarray,
    labels: np.ndarray,
    predictions: np.ndarray,
    n_classes: int,
    eta: int = DEFAULT_ETA,
    delta: float = DEFAULT_DELTA,
) -> OpenSetModel:
    """Fit one ClassStatistics per known class from correctly classified
    training activations."""
    correct = labels == predictions
    stats = []
    for h in range(n_classes):
        sel = activations[correct & (labels == h)]
        if len(sel) < 2:
            raise OpenSetError(f"class {h} has {len(sel)} correctly classified samples; need >= 2")
        stats.append(fit_class_stats(sel, eta))
    return OpenSetModel(stats, delta=delta, eta=eta)


def tune_delta(
    model: OpenSetModel,
    probs: np.ndarray,
    activations: np.ndarray,
    labels: np.ndarray,
    grid=None,
) -> float:
    """Pick the delta maximizing macro F1 over known classes plus unknown
    (label ``model.n_classes``) on a validation split."""
    from macprint.evaluation import macro_f1

    grid = np.round(np.arange(0.05, 1.0, 0.05), 2) if grid is None else grid
    qhat = model.calibrate(probs, activations)
    best_delta, best_f1 = model.delta, -1.0
    for d in grid:
        f1 = macro_f1(labels, decide(qhat, float(d)), model.n_classes + 1)
        if f1 > best_f1 + 1e-12:
            best_delta, best_f1 = float(d), f1
    return best_delta
