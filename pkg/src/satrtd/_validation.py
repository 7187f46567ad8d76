"""Input checks shared by the estimators."""
import numpy as np
from sklearn.utils.validation import check_array


def check_sample(x, min_size=1):
    x = check_array(x, ensure_2d=False, dtype=np.float64, ensure_min_samples=0)
    if x.ndim != 1:
        x = x.ravel()
    if len(x) < min_size:
        raise ValueError(f"need at least {min_size} observations, got {len(x)}")
    return x


def check_observations(t, censored=None, min_size=1):
    """Validate ``(observed, censored)`` pairs; no flags means fully observed."""
    t = check_sample(t, min_size=min_size)
    if censored is None:
        cen = np.zeros(len(t), dtype=int)
    else:
        cen = np.asarray(censored).ravel()
        if cen.shape != t.shape:
            raise ValueError("censoring flags must match the observations in length")
        if not np.isin(cen, (0, 1)).all():
            raise ValueError("censoring flags must be 0 or 1")
        cen = cen.astype(int)
    return t, cen
