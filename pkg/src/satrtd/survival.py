"""Censoring-aware descriptive statistics.

Kaplan-Meier estimation, KM-weighted histograms, Hartigans' dip statistic and
a right-censored Gaussian test for the mean paired difference against a
baseline run.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_observations, check_sample

DIP_THRESHOLD = 0.005
SIGNIFICANCE = 0.05

POSITIVE = "POSITIVE"
NEGATIVE = "NEGATIVE"
NO_EFFECT = "NO_EFFECT"


# -- ecdf ---------------------------------------------------------------------

class ECDF:
    """Right-continuous empirical cdf of a sample."""

    def __init__(self, sample):
        x = check_sample(sample, min_size=1)
        self.x = np.sort(x)
        self.n = len(self.x)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.x, t, side="right")
        return k / self.n


def ecdf(sample) -> ECDF:
    return ECDF(sample)


# -- Kaplan-Meier ---------------------------------------------------------------

class KaplanMeier(BaseEstimator):
    """Product-limit estimate of the survival function under right-censoring.

    Parameters
    ----------
    alpha : float, default=0.05
        Pointwise band is ``1 - alpha``, Greenwood variance on the log scale.

    Attributes
    ----------
    times_ : ndarray
        Distinct event times (drop points).
    survival_ : ndarray
        Estimated survival at each drop point.
    n_events_, n_at_risk_ : ndarray
    ci_lower_, ci_upper_ : ndarray
    all_censored_ : bool
        Set when there are no events; the curve is then identically one.
    """

    def __init__(self, alpha=0.05):
        self.alpha = alpha

    def fit(self, t, censored=None):
        t, cen = check_observations(t, censored)
        if np.any(t < 0):
            raise ValueError("observations must be non-negative")
        order = np.argsort(t, kind="stable")
        t, cen = t[order], cen[order]
        self.n_obs_ = len(t)
        event_t = np.unique(t[cen == 0])
        self.all_censored_ = len(event_t) == 0
        if self.all_censored_:
            warnings.warn("all observations censored; survival estimate is identically 1",
                          RuntimeWarning, stacklevel=2)
        # censored ties at an event time stay at risk through it
        n_at_risk = len(t) - np.searchsorted(t, event_t, side="left")
        ev = np.sort(t[cen == 0])
        d = np.searchsorted(ev, event_t, side="right") - np.searchsorted(ev, event_t, side="left")

        surv = np.empty(len(event_t))
        s_start, n_start, cum = 1.0, None, 0
        prev_left = None
        for i, (n_i, d_i) in enumerate(zip(n_at_risk, d)):
            # Within a stretch free of censoring the product telescopes to
            # 1 - D/N; evaluating it that way keeps the uncensored case exact.
            if n_start is None or n_i != prev_left:
                if n_start is not None:
                    s_start = surv[i - 1]
                n_start, cum = int(n_i), 0
            cum += int(d_i)
            surv[i] = s_start * (1.0 - cum / n_start)
            prev_left = n_i - d_i
        self.times_ = event_t
        self.survival_ = surv
        self.n_events_ = d.astype(int)
        self.n_at_risk_ = n_at_risk.astype(int)
        self.t_max_ = float(t[-1])

        with np.errstate(divide="ignore", invalid="ignore"):
            gw = np.cumsum(d / (n_at_risk * (n_at_risk - d)))
            z = stats.norm.ppf(1 - self.alpha / 2)
            half = z * np.sqrt(gw)
            lo = surv * np.exp(-half)
            hi = np.minimum(1.0, surv * np.exp(half))
        zero = surv <= 0
        lo[zero] = 0.0
        hi[zero] = 0.0
        self.ci_lower_ = np.nan_to_num(lo, nan=0.0)
        self.ci_upper_ = np.nan_to_num(hi, nan=1.0)
        return self

    def survival_function(self, t):
        check_is_fitted(self, "survival_")
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times_, t, side="right")
        s = np.concatenate([[1.0], self.survival_])
        return s[idx]

    predict = survival_function

    def cdf(self, t):
        return 1.0 - self.survival_function(t)

    def drop_masses(self):
        """Probability mass ``S(t_i-) - S(t_i)`` at each drop point."""
        check_is_fitted(self, "survival_")
        before = np.concatenate([[1.0], self.survival_[:-1]])
        return before - self.survival_

    def to_csv(self) -> str:
        check_is_fitted(self, "survival_")
        lines = ["time,survival,n_at_risk,n_events,ci_lower,ci_upper"]
        for row in zip(self.times_.tolist(), self.survival_.tolist(), self.n_at_risk_.tolist(),
                       self.n_events_.tolist(), self.ci_lower_.tolist(), self.ci_upper_.tolist()):
            t, s, n, d, lo, hi = row
            lines.append(f"{t!r},{s!r},{n},{d},{lo!r},{hi!r}")
        return "\n".join(lines) + "\n"


def kaplan_meier(t, censored=None, alpha=0.05) -> KaplanMeier:
    return KaplanMeier(alpha=alpha).fit(t, censored)


@dataclass(frozen=True)
class KMHistogram:
    masses: np.ndarray
    edges: np.ndarray  # in data units even when log_scale
    log_scale: bool

    @property
    def total(self) -> float:
        return float(self.masses.sum())


def km_histogram(curve: KaplanMeier, bins=30, log_scale: bool = False) -> KMHistogram:
    """Histogram whose weights are the KM drop masses."""
    check_is_fitted(curve, "survival_")
    if len(curve.times_) == 0:
        raise ValueError("curve has no drop points")
    t = curve.times_
    w = curve.drop_masses()
    if log_scale:
        if np.any(t <= 0):
            raise ValueError("log-scaled histogram needs strictly positive drop times")
        if np.ndim(bins) == 1:
            bins = np.log10(np.asarray(bins, dtype=float))
        masses, edges = np.histogram(np.log10(t), bins=bins, weights=w)
        edges = 10.0 ** edges
    else:
        masses, edges = np.histogram(t, bins=bins, weights=w)
    return KMHistogram(masses, edges, log_scale)


# -- dip ------------------------------------------------------------------------

def dip_statistic(sample) -> float:
    """Hartigans' dip: distance from the ecdf to the nearest unimodal cdf.

    Port of the greatest-convex-minorant / least-concave-majorant iteration
    of Hartigan & Hartigan (1985), AS 217 with later fixes. The value lies in
    ``[1/(2n), 1/4]`` for non-degenerate samples.
    """
    x = np.sort(check_sample(sample, min_size=3))
    n = len(x)
    if x[0] == x[-1]:
        return 1.0 / (2 * n)
    return _dip_sorted(x)[0]


def _dip_sorted(xs):
    n = len(xs)
    x = np.concatenate([[0.0], xs]).tolist()  # 1-based
    mn = [0] * (n + 1)
    mj = [0] * (n + 1)
    gcm = [0] * (n + 2)
    lcm = [0] * (n + 2)

    mn[1] = 1
    for j in range(2, n + 1):
        mn[j] = j - 1
        while True:
            mnj = mn[j]
            mnmnj = mn[mnj]
            if mnj == 1 or (x[j] - x[mnj]) * (mnj - mnmnj) < (x[mnj] - x[mnmnj]) * (j - mnj):
                break
            mn[j] = mnmnj
    mj[n] = n
    for k in range(n - 1, 0, -1):
        mj[k] = k + 1
        while True:
            mjk = mj[k]
            mjmjk = mj[mjk]
            if mjk == n or (x[k] - x[mjk]) * (mjk - mjmjk) < (x[mjk] - x[mjmjk]) * (k - mjk):
                break
            mj[k] = mjmjk

    low, high = 1, n
    dip = 1.0
    while True:
        gcm[1] = high
        i = 1
        while gcm[i] > low:
            gcm[i + 1] = mn[gcm[i]]
            i += 1
        ig = l_gcm = i
        ix = ig - 1

        lcm[1] = low
        i = 1
        while lcm[i] < high:
            lcm[i + 1] = mj[lcm[i]]
            i += 1
        ih = l_lcm = i
        iv = 2

        d = 0.0
        if l_gcm != 2 or l_lcm != 2:
            while True:
                gcmix = gcm[ix]
                lcmiv = lcm[iv]
                if gcmix > lcmiv:
                    gcmi1 = gcm[ix + 1]
                    dx = (lcmiv - gcmi1 + 1) - (x[lcmiv] - x[gcmi1]) * (gcmix - gcmi1) / (x[gcmix] - x[gcmi1])
                    iv += 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv - 1
                else:
                    lcmiv1 = lcm[iv - 1]
                    dx = (x[gcmix] - x[lcmiv1]) * (lcmiv - lcmiv1) / (x[lcmiv] - x[lcmiv1]) - (gcmix - lcmiv1 - 1)
                    ix -= 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv
                if ix < 1:
                    ix = 1
                if iv > l_lcm:
                    iv = l_lcm
                if gcm[ix] == lcm[iv]:
                    break
        else:
            d = 1.0

        if d < dip:
            break

        dip_l = 0.0
        for j in range(ig, l_gcm):
            max_t = 1.0
            jb, je = gcm[j + 1], gcm[j]
            if je - jb > 1 and x[je] != x[jb]:
                c = (je - jb) / (x[je] - x[jb])
                for jj in range(jb, je + 1):
                    t = (jj - jb + 1) - (x[jj] - x[jb]) * c
                    if max_t < t:
                        max_t = t
            if dip_l < max_t:
                dip_l = max_t
        dip_u = 0.0
        for j in range(ih, l_lcm):
            max_t = 1.0
            jb, je = lcm[j], lcm[j + 1]
            if je - jb > 1 and x[je] != x[jb]:
                c = (je - jb) / (x[je] - x[jb])
                for jj in range(jb, je + 1):
                    t = (x[jj] - x[jb]) * c - (jj - jb - 1)
                    if max_t < t:
                        max_t = t
            if dip_u < max_t:
                dip_u = max_t
        dipnew = max(dip_l, dip_u)
        if dip < dipnew:
            dip = dipnew
        if low == gcm[ig] and high == lcm[ih]:
            break
        low, high = gcm[ig], lcm[ih]
    return dip / (2 * n), (xs[low - 1], xs[high - 1])


def is_multimodal(sample, threshold: float = DIP_THRESHOLD) -> bool:
    return dip_statistic(sample) > threshold


# -- censored paired test ---------------------------------------------------------

@dataclass(frozen=True)
class EffectResult:
    z: float
    p_value: float
    classification: Optional[str]
    measure: str = "time"
    mean: float = float("nan")
    sigma: float = float("nan")
    n: int = 0
    n_censored: int = 0
    converged: bool = True
    diagnostic: str = ""


def classify(z: float, p: float, alpha: float = SIGNIFICANCE) -> str:
    """POSITIVE: extended runs significantly faster than the baseline."""
    if not p < alpha:
        return NO_EFFECT
    return POSITIVE if z < 0 else NEGATIVE


class CensoredGaussianMLE(BaseEstimator):
    """Maximum likelihood (mean, sd) of a Gaussian from right-censored data.

    Damped Newton on ``(mu, log sigma)`` with analytic derivatives, after
    standardizing the data; golden-section on ``mu`` with profiled sigma as
    fallback.
    """

    def __init__(self, tol=1e-8, max_iter=200):
        self.tol = tol
        self.max_iter = max_iter

    @staticmethod
    def _derivs(theta, y, cen):
        mu, tau = theta
        sigma = math.exp(tau)
        z = (y - mu) / sigma
        zo, zc = z[cen == 0], z[cen == 1]
        logq = stats.norm.logsf(zc)
        ll = np.sum(-tau - 0.5 * zo * zo) + np.sum(logq)
        lam = np.exp(stats.norm.logpdf(zc) - logq)
        dlam = lam * (lam - zc)
        g = np.array([
            np.sum(zo) / sigma + np.sum(lam) / sigma,
            np.sum(zo * zo - 1.0) + np.sum(lam * zc),
        ])
        h_mm = -len(zo) / sigma ** 2 - np.sum(dlam) / sigma ** 2
        h_mt = -2.0 * np.sum(zo) / sigma - np.sum(dlam * zc + lam) / sigma
        h_tt = -2.0 * np.sum(zo * zo) - np.sum(zc * (dlam * zc + lam))
        return ll, g, np.array([[h_mm, h_mt], [h_mt, h_tt]])

    def fit(self, y, censored=None):
        y, cen = check_observations(y, censored)
        if np.sum(cen == 0) < 2:
            raise ValueError("need at least two uncensored observations")
        loc = float(np.mean(y))
        scale = float(np.std(y))
        if not scale > 0:
            raise ValueError("observations have zero spread")
        ys = (y - loc) / scale
        theta = np.array([float(np.mean(ys[cen == 0])), math.log(max(np.std(ys[cen == 0]), 1e-3))])
        ll, g, h = self._derivs(theta, ys, cen)
        self.converged_ = False
        for it in range(self.max_iter):
            if np.max(np.abs(g)) < self.tol:
                self.converged_ = True
                break
            try:
                step = -np.linalg.solve(h, g)
                if g @ step <= 0:
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                step = g / max(1.0, np.max(np.abs(g)))
            t = 1.0
            while t > 1e-12:
                cand = theta + t * step
                ll_c, g_c, h_c = self._derivs(cand, ys, cen)
                if np.isfinite(ll_c) and ll_c >= ll - 1e-12 * abs(ll):
                    break
                t *= 0.5
            else:
                break
            theta, ll, g, h = cand, ll_c, g_c, h_c
        self.n_iter_ = it
        if not self.converged_:
            theta, ll, g, h = self._golden_fallback(ys, cen)
            self.converged_ = bool(np.max(np.abs(g)) < 1e-6)
        mu_s, tau = theta
        self.mean_ = loc + scale * mu_s
        self.sigma_ = scale * math.exp(tau)
        cov = np.linalg.inv(-h)
        self.se_mean_ = scale * math.sqrt(cov[0, 0]) if cov[0, 0] > 0 else float("nan")
        self.loglik_ = ll - len(y) * math.log(scale) - 0.5 * np.sum(cen == 0) * math.log(2 * math.pi)
        self.gradient_ = g
        return self

    def _golden_fallback(self, ys, cen):
        def profile(mu):
            res = minimize_scalar(lambda tau: -self._derivs((mu, tau), ys, cen)[0],
                                  bracket=(-2.0, 1.0), method="brent", tol=1e-12)
            return res.fun, res.x

        lo, hi = float(np.min(ys)) - 5.0, float(np.max(ys)) + 5.0
        res = minimize_scalar(lambda m: profile(m)[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        tau = profile(res.x)[1]
        ll, g, h = self._derivs((res.x, tau), ys, cen)
        return np.array([res.x, tau]), ll, g, h


def censored_paired_test(baseline: float, observed, censored=None, measure: str = "time",
                         alpha: float = SIGNIFICANCE) -> EffectResult:
    """Test whether the mean of ``observed - baseline`` differs from zero.

    Differences inherit the right-censoring flags of the observations; the
    Gaussian likelihood treats censored differences through the survival
    term. ``Z = mean / se(mean)`` from the observed information.
    """
    y, cen = check_observations(observed, censored)
    d = y - float(baseline)
    n_cen = int(cen.sum())
    try:
        mle = CensoredGaussianMLE().fit(d, cen)
    except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        if np.sum(cen == 0) < 2:
            raise
        return EffectResult(float("nan"), float("nan"), None, measure, n=len(d),
                            n_censored=n_cen, converged=False, diagnostic=str(exc))
    if not mle.converged_ or not np.isfinite(mle.se_mean_) or mle.se_mean_ <= 0:
        return EffectResult(float("nan"), float("nan"), None, measure, mle.mean_, mle.sigma_,
                            len(d), n_cen, False, "censored likelihood optimization did not converge")
    z = mle.mean_ / mle.se_mean_
    p = max(2.0 * stats.norm.sf(abs(z)), np.nextafter(0.0, 1.0))
    return EffectResult(float(z), float(p), classify(z, p, alpha), measure, float(mle.mean_),
                        float(mle.sigma_), len(d), n_cen, True, "")


# -- effect tables -------------------------------------------------------------------

@dataclass
class CampaignResult:
    """What the effect table needs from one campaign."""

    instance_id: str
    status: str  # SAT / UNSAT of the base instance
    baseline: dict  # measure -> baseline value
    observed: dict  # measure -> (values, censored)

    @property
    def n_censored(self) -> int:
        any_measure = next(iter(self.observed.values()))
        return int(np.sum(any_measure[1]))


@dataclass
class EffectTable:
    by_censoring: dict
    by_status: dict
    excluded: int
    rows: list

    def counts(self, group: str = None) -> tuple:
        """``(positive, no_effect, negative)``, overall or for one group."""
        if group is None:
            cells = list(self.by_censoring.values())
        elif group in self.by_censoring:
            cells = [self.by_censoring[group]]
        else:
            cells = [self.by_status[group]]
        return tuple(sum(cell[c] for cell in cells) for c in (POSITIVE, NO_EFFECT, NEGATIVE))

    def to_csv(self) -> str:
        lines = ["instance,status,cen,Z_time,p_time,Z_confl,p_confl"]
        for r in self.rows:
            lines.append(",".join(_fmt(r[k]) for k in
                                  ("instance", "status", "cen", "Z_time", "p_time", "Z_confl", "p_confl")))
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def classify_effect_table(campaigns, measure: str = "time") -> EffectTable:
    """Count POSITIVE / NO_EFFECT / NEGATIVE outcomes across campaigns.

    Split by whether any run was censored and by base-instance status.
    Campaigns whose test fails are excluded and counted separately.
    """
    empty = lambda: {POSITIVE: 0, NO_EFFECT: 0, NEGATIVE: 0}
    by_cen = {"with censoring": empty(), "without censoring": empty()}
    by_status = {"SAT": empty(), "UNSAT": empty()}
    excluded = 0
    rows = []
    for c in campaigns:
        row = {"instance": c.instance_id, "status": c.status, "cen": c.n_censored,
               "Z_time": float("nan"), "p_time": float("nan"),
               "Z_confl": float("nan"), "p_confl": float("nan")}
        results = {}
        for m, (vals, cen) in c.observed.items():
            try:
                results[m] = censored_paired_test(c.baseline[m], vals, cen, measure=m)
            except ValueError:
                results[m] = None
        for m, key in (("time", "time"), ("conflicts", "confl")):
            r = results.get(m)
            if r is not None:
                row[f"Z_{key}"], row[f"p_{key}"] = r.z, r.p_value
        rows.append(row)
        res = results.get(measure)
        if res is None or res.classification is None:
            excluded += 1
            continue
        group = "with censoring" if c.n_censored else "without censoring"
        by_cen[group][res.classification] += 1
        if c.status in by_status:
            by_status[c.status][res.classification] += 1
    return EffectTable(by_cen, by_status, excluded, rows)
