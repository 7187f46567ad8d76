"""Weibull distributions, censored maximum likelihood and Weibull mixtures."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_observations


def logsumexp(a, axis=None):
    # scipy's version carries array-API dispatch overhead that dominates EM
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out.item() if axis is None else np.squeeze(out, axis=axis)


def _as_generator(random_state) -> np.random.Generator:
    if isinstance(random_state, np.random.Generator):
        return random_state
    if isinstance(random_state, np.random.RandomState):
        return np.random.default_rng(random_state.randint(0, 2**31))
    return np.random.default_rng(random_state)


class FitError(RuntimeError):
    pass


class WeibullParams(NamedTuple):
    shape: float
    scale: float
    loc: float = 0.0


class WeibullEval(NamedTuple):
    pdf: np.ndarray
    cdf: np.ndarray
    sf: np.ndarray


def _check_params(p: WeibullParams):
    if not (p.shape > 0 and p.scale > 0):
        raise ValueError(f"Weibull shape and scale must be positive, got {p}")


def weibull_logpdf(params: WeibullParams, x):
    k, a, loc = params
    x = np.asarray(x, dtype=float)
    z = (x - loc) / a
    out = np.full(z.shape, -np.inf)
    pos = z > 0
    zp = z[pos]
    out[pos] = math.log(k / a) + (k - 1) * np.log(zp) - zp ** k
    if k == 1:
        out[z == 0] = math.log(1 / a)
    elif k < 1:
        out[z == 0] = np.inf
    return out


def weibull_logsf(params: WeibullParams, x):
    k, a, loc = params
    z = np.maximum((np.asarray(x, dtype=float) - loc) / a, 0.0)
    return -(z ** k)


def weibull_eval(params: WeibullParams, x) -> WeibullEval:
    """pdf, cdf and survival at ``x``; pdf and cdf vanish below the location."""
    params = WeibullParams(*params)
    _check_params(params)
    x = np.asarray(x, dtype=float)
    logsf = weibull_logsf(params, x)
    return WeibullEval(np.exp(weibull_logpdf(params, x)), -np.expm1(logsf), np.exp(logsf))


def weibull_quantile(params: WeibullParams, q):
    params = WeibullParams(*params)
    _check_params(params)
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    k, a, loc = params
    return loc + a * (-np.log1p(-q)) ** (1.0 / k)


def weibull_sample(params: WeibullParams, n: int, random_state=None):
    rng = _as_generator(random_state)
    k, a, loc = WeibullParams(*params)
    return loc + a * rng.weibull(k, size=n)


def weibull_loglik(params: WeibullParams, t, censored=None, weights=None) -> float:
    t, cen = check_observations(t, censored)
    w = np.ones(len(t)) if weights is None else np.asarray(weights, dtype=float)
    ev = cen == 0
    ll = np.sum(w[ev] * weibull_logpdf(params, t[ev])) + np.sum(w[~ev] * weibull_logsf(params, t[~ev]))
    return float(ll)


def classify_long_tailed(params: WeibullParams) -> bool:
    """Shape below one: P(X > x + y) / P(X > x) tends to one."""
    return WeibullParams(*params).shape < 1


def tail_ratio(params: WeibullParams, x, y):
    """P(X > x + y) / P(X > x) evaluated from the survival function."""
    params = WeibullParams(*params)
    return np.exp(weibull_logsf(params, np.asarray(x) + y) - weibull_logsf(params, x))


# -- 2-parameter censored, weighted MLE ------------------------------------------

def _weibull2_mle(t, events, w, k0=None, k_lo=1e-3, k_hi=1e3):
    """Weighted right-censored 2-parameter MLE.

    For fixed shape the scale has the closed form
    ``a**k = sum(w t**k) / sum(w events)``; the shape solves the profile score
    equation ``r/k - r A(k) + B = 0``, where ``A`` is the ``w t**k``-weighted
    mean of ``log t``. The score is strictly decreasing (its derivative is
    ``-r/k**2 - r Var(log t)``), so safeguarded Newton from ``k0`` is used.
    Returns ``(shape, scale, loglik)``.
    """
    r = float(np.sum(w * events))
    if r <= 0:
        raise FitError("no (weighted) events to fit")
    mask = w > 0
    logt = np.log(t[mask])
    wm, em = w[mask], (w * events)[mask]
    center = float(np.sum(wm * logt) / np.sum(wm))
    lt = logt - center
    if np.ptp(lt) == 0:
        raise FitError("all observations coincide")
    b = float(np.sum(em * lt))
    log_w = np.log(wm)

    def score(k):
        lw = log_w + k * lt
        e = np.exp(lw - lw.max())
        s0 = e.sum()
        m1 = float(e @ lt) / s0
        m2 = float(e @ (lt * lt)) / s0
        return r / k - r * m1 + b, -r / (k * k) - r * max(m2 - m1 * m1, 0.0)

    lo, hi = k_lo, k_hi
    k = min(max(1.0 if k0 is None else float(k0), lo * 2), hi / 2)
    for _ in range(200):
        g, dg = score(k)
        if g > 0:
            lo = k
        else:
            hi = k
        if abs(g) <= 1e-13 * r:
            break
        step = k - g / dg
        # Newton unless it leaves the bracket; then bisect geometrically
        k_new = step if lo < step < hi else math.sqrt(lo * hi)
        if abs(k_new - k) <= 1e-15 * k:
            k = k_new
            break
        k = k_new
    if k <= k_lo * (1 + 1e-9) or k >= k_hi * (1 - 1e-9):
        raise FitError("shape parameter outside the search bracket")
    log_ak = float(logsumexp(k * lt + log_w)) - math.log(r)
    a = math.exp(center + log_ak / k)
    z = logt - math.log(a)
    ll = r * math.log(k / a) + (k - 1) * float(em @ z) - float(wm @ np.exp(k * z))
    return k, a, ll


def weibull_gradient(params: WeibullParams, t, censored=None, weights=None):
    """Score of the censored log-likelihood w.r.t. (shape, log scale), loc fixed."""
    t, cen = check_observations(t, censored)
    k, a, loc = params
    w = np.ones(len(t)) if weights is None else np.asarray(weights, dtype=float)
    z = (t - loc) / a
    lz = np.log(z)
    zk = z ** k
    ev = (cen == 0).astype(float)
    d_k = np.sum(w * (ev * (1 / k + lz) - zk * lz))
    d_loga = np.sum(w * (-ev * k + k * zk))
    return np.array([d_k, d_loga])


class WeibullFitter(BaseEstimator):
    """Right-censored maximum-likelihood Weibull fit.

    Parameters
    ----------
    three_param : bool, default=False
        Also estimate the location by profiling over a grid of candidates
        in ``[0, min(t))`` followed by a bounded refinement.
    location : float or "min", optional
        Fix the location instead (``"min"`` shifts by the sample minimum,
        kept a hair below it so the smallest point stays in the support).
    n_grid : int, default=64
    """

    def __init__(self, three_param=False, location=None, n_grid=64):
        self.three_param = three_param
        self.location = location
        self.n_grid = n_grid

    def fit(self, t, censored=None, sample_weight=None):
        t, cen = check_observations(t, censored)
        if np.any(t <= 0):
            raise ValueError("observations must be strictly positive")
        if np.sum(cen == 0) < 10:
            raise FitError("need at least 10 uncensored observations")
        w = np.ones(len(t)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        ev = (cen == 0).astype(float)
        tmin = float(t.min())
        self.at_boundary_ = False
        if self.location is not None:
            loc = tmin * (1 - 1e-6) if self.location == "min" else float(self.location)
            if loc >= tmin:
                raise ValueError("fixed location must lie below the smallest observation")
            k, a, ll = _weibull2_mle(t - loc, ev, w)
        elif self.three_param:
            k, a, loc, ll = self._profile_location(t, ev, w, tmin)
        else:
            loc = 0.0
            k, a, ll = _weibull2_mle(t, ev, w)
        k, a, loc = float(k), float(a), float(loc)
        self.shape_, self.scale_, self.loc_ = k, a, loc
        self.params_ = WeibullParams(k, a, loc)
        self.loglik_ = ll
        self.n_obs_ = len(t)
        self.gradient_ = weibull_gradient(self.params_, t, cen, w)
        self.converged_ = bool(np.max(np.abs(self.gradient_)) < 1e-8 * max(1.0, np.sum(w))
                               or self.at_boundary_)
        return self

    def _profile_location(self, t, ev, w, tmin):
        gaps = np.geomspace(tmin, tmin * 1e-6, self.n_grid)
        locs = tmin - gaps
        locs[0] = 0.0

        def prof(gap):
            try:
                return _weibull2_mle(t - (tmin - gap), ev, w)[2]
            except FitError:
                return -np.inf

        lls = np.array([prof(g) for g in gaps])
        j = int(np.argmax(lls))
        if j == len(gaps) - 1:
            self.at_boundary_ = True
            best_gap = gaps[j]
        else:
            lo_i, hi_i = max(j - 1, 0), min(j + 1, len(gaps) - 1)
            res = minimize_scalar(lambda lg: -prof(math.exp(lg)),
                                  bounds=(math.log(gaps[hi_i]), math.log(gaps[lo_i])),
                                  method="bounded", options={"xatol": 1e-10})
            best_gap = math.exp(res.x) if -res.fun >= lls[j] else gaps[j]
        loc = 0.0 if best_gap >= tmin else tmin - best_gap
        k, a, ll = _weibull2_mle(t - loc, ev, w)
        return k, a, loc, ll

    # distribution methods
    def pdf(self, x):
        check_is_fitted(self, "params_")
        return weibull_eval(self.params_, x).pdf

    def cdf(self, x):
        check_is_fitted(self, "params_")
        return weibull_eval(self.params_, x).cdf

    def sf(self, x):
        check_is_fitted(self, "params_")
        return weibull_eval(self.params_, x).sf

    def ppf(self, q):
        check_is_fitted(self, "params_")
        return weibull_quantile(self.params_, q)

    def sample(self, n, random_state=None):
        check_is_fitted(self, "params_")
        return weibull_sample(self.params_, n, random_state)

    def score(self, t, censored=None):
        """Mean log-likelihood per observation."""
        check_is_fitted(self, "params_")
        t, cen = check_observations(t, censored)
        return weibull_loglik(self.params_, t, cen) / len(t)

    def bic(self, n=None):
        check_is_fitted(self, "params_")
        n_params = 3 if (self.three_param and self.location is None) else 2
        return -2 * self.loglik_ + n_params * math.log(n or self.n_obs_)


def fit_weibull(t, censored=None, three_param=False) -> WeibullParams:
    return WeibullFitter(three_param=three_param).fit(t, censored).params_


# -- mixtures ----------------------------------------------------------------------

class WeibullMixture(BaseEstimator):
    """Finite mixture of 2-parameter Weibull components, fitted by EM.

    Censored points enter the E-step through component survival functions
    and the M-step through a responsibility-weighted censored MLE per
    component.

    Parameters
    ----------
    n_components : int, default=2
    tol : float, default=1e-8
        Stop when the log-likelihood gain of one iteration drops below this.
    max_iter : int, default=500
    n_init : int, default=1
        Restarts; the first uses a quantile split, later ones perturb it.
    random_state : int or None
    """

    def __init__(self, n_components=2, tol=1e-8, max_iter=500, n_init=1, random_state=None):
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.n_init = n_init
        self.random_state = random_state

    def fit(self, t, censored=None):
        t, cen = check_observations(t, censored)
        if np.any(t <= 0):
            raise ValueError("observations must be strictly positive")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        rng = _as_generator(self.random_state)
        m = self.n_components
        self.collapsed_ = False
        while True:
            if np.sum(cen == 0) < 10 * m:
                raise FitError(f"need at least {10 * m} uncensored observations for {m} components")
            best = None
            for init in range(max(1, self.n_init)):
                try:
                    res = self._em(t, cen, m, rng if init else None)
                except FitError:
                    continue
                if best is None or res["loglik"] > best["loglik"]:
                    best = res
            if best is None:
                raise FitError("every EM start failed")
            if best["weights"].min() < 1e-6 and m > 1:
                self.collapsed_ = True
                m -= 1
                continue
            break
        order = np.argsort([s for _, s in best["components"]], kind="stable")
        self.weights_ = best["weights"][order]
        self.weights_ = self.weights_ / self.weights_.sum()
        self.components_ = [WeibullParams(*map(float, best["components"][i])) for i in order]
        self.loglik_ = best["loglik"]
        self.loglik_history_ = best["history"]
        self.n_iter_ = len(best["history"]) - 1
        self.converged_ = best["converged"]
        self.n_components_ = m
        self.n_obs_ = len(t)
        return self

    def _init_components(self, t, cen, m, rng):
        order = np.argsort(t, kind="stable")
        if rng is None:
            cuts = np.linspace(0, len(t), m + 1)
        else:
            cuts = np.concatenate([[0], np.sort(rng.uniform(0, 1, m - 1)) * len(t), [len(t)]])
            cuts = 0.5 * cuts + 0.5 * np.linspace(0, len(t), m + 1)
        cuts = np.round(cuts).astype(int)
        comps, weights = [], []
        for i in range(m):
            idx = order[cuts[i]:cuts[i + 1]]
            ev = (cen[idx] == 0).astype(float)
            if len(idx) < 2 or ev.sum() < 2 or np.ptp(t[idx]) == 0:
                raise FitError("degenerate initial split")
            k, a, _ = _weibull2_mle(t[idx], ev, np.ones(len(idx)))
            comps.append((k, a))
            weights.append(len(idx) / len(t))
        return comps, np.array(weights)

    @staticmethod
    def _component_logs(t, cen, comps):
        ev = cen == 0
        out = np.empty((len(comps), len(t)))
        for i, (k, a) in enumerate(comps):
            p = WeibullParams(k, a, 0.0)
            out[i, ev] = weibull_logpdf(p, t[ev])
            out[i, ~ev] = weibull_logsf(p, t[~ev])
        return out

    def _em(self, t, cen, m, rng):
        ev = (cen == 0).astype(float)
        if m == 1:
            k, a, ll = _weibull2_mle(t, ev, np.ones(len(t)))
            return {"weights": np.ones(1), "components": [(k, a)], "loglik": ll,
                    "history": [ll], "converged": True}
        comps, weights = self._init_components(t, cen, m, rng)
        logs = self._component_logs(t, cen, comps)
        joint = logs + np.log(weights)[:, None]
        ll = float(np.sum(logsumexp(joint, axis=0)))
        history = [ll]
        converged = False
        for _ in range(self.max_iter):
            resp = np.exp(joint - logsumexp(joint, axis=0))
            weights = resp.mean(axis=1)
            if weights.min() < 1e-6:
                break
            new = []
            for i in range(m):
                try:
                    k, a, _ = _weibull2_mle(t, ev, resp[i], k0=comps[i][0])
                except FitError:
                    k, a = comps[i]
                new.append((k, a))
            comps = new
            logs = self._component_logs(t, cen, comps)
            joint = logs + np.log(weights)[:, None]
            ll_new = float(np.sum(logsumexp(joint, axis=0)))
            if ll_new < ll - 1e-9 * abs(ll):
                warnings.warn(f"EM log-likelihood decreased by {ll - ll_new:.3g}", RuntimeWarning)
            history.append(ll_new)
            gain = ll_new - ll
            ll = ll_new
            if gain < self.tol:
                converged = True
                break
        return {"weights": weights, "components": comps, "loglik": ll, "history": history,
                "converged": converged}

    # distribution methods
    def _check(self):
        check_is_fitted(self, "components_")

    def cdf(self, x):
        self._check()
        return sum(w * weibull_eval(c, x).cdf for w, c in zip(self.weights_, self.components_))

    def pdf(self, x):
        self._check()
        return sum(w * weibull_eval(c, x).pdf for w, c in zip(self.weights_, self.components_))

    def sf(self, x):
        self._check()
        return sum(w * weibull_eval(c, x).sf for w, c in zip(self.weights_, self.components_))

    def predict_proba(self, t, censored=None):
        """Component responsibilities, shape ``(n_samples, n_components)``."""
        self._check()
        t, cen = check_observations(t, censored)
        joint = self._component_logs(t, cen, [(c.shape, c.scale) for c in self.components_])
        joint += np.log(self.weights_)[:, None]
        return np.exp(joint - logsumexp(joint, axis=0)).T

    def predict(self, t, censored=None):
        return np.argmax(self.predict_proba(t, censored), axis=1)

    def score(self, t, censored=None):
        self._check()
        t, cen = check_observations(t, censored)
        joint = self._component_logs(t, cen, [(c.shape, c.scale) for c in self.components_])
        joint += np.log(self.weights_)[:, None]
        return float(np.sum(logsumexp(joint, axis=0))) / len(t)

    def sample(self, n, random_state=None):
        self._check()
        rng = _as_generator(random_state)
        which = rng.choice(len(self.weights_), size=n, p=self.weights_)
        out = np.empty(n)
        for i, c in enumerate(self.components_):
            sel = which == i
            out[sel] = weibull_sample(c, int(sel.sum()), rng)
        return out

    @property
    def n_parameters(self) -> int:
        return 3 * self.n_components_ - 1

    def bic(self):
        self._check()
        return -2 * self.loglik_ + self.n_parameters * math.log(self.n_obs_)

    @property
    def long_tailed_(self) -> bool:
        """Long tail of the mixture is governed by its heaviest component."""
        self._check()
        return any(classify_long_tailed(c) for c in self.components_)

    def report(self) -> str:
        self._check()
        lines = [f"components = {self.n_components_}",
                 f"loglik = {float(self.loglik_)!r}",
                 f"bic = {float(self.bic())!r}",
                 f"iterations = {self.n_iter_}",
                 f"converged = {self.converged_}",
                 f"collapsed = {self.collapsed_}",
                 f"long_tailed = {self.long_tailed_}"]
        for i, (w, c) in enumerate(zip(self.weights_, self.components_)):
            lines.append(f"component {i}: weight = {float(w)!r} shape = {float(c.shape)!r} "
                         f"scale = {float(c.scale)!r}")
        return "\n".join(lines) + "\n"


def fit_mixture_em(t, censored=None, n_components=2, random_state=0, n_init=1) -> WeibullMixture:
    return WeibullMixture(n_components, n_init=n_init, random_state=random_state).fit(t, censored)


def select_components(t, censored=None, max_components=3, n_init=5, random_state=0) -> WeibullMixture:
    """Fit 1..max_components mixtures and return the BIC-minimal one."""
    if not 1 <= max_components <= 6:
        raise ValueError("max_components must lie in [1, 6]")
    best = None
    fits = {}
    for m in range(1, max_components + 1):
        try:
            model = WeibullMixture(m, n_init=n_init, random_state=random_state).fit(t, censored)
        except FitError:
            if m == 1:
                raise
            break
        if model.n_components_ != m:
            break
        fits[m] = model.bic()
        if best is None or model.bic() < best.bic():
            best = model
    best.bic_by_components_ = fits
    return best


# -- diagnostics --------------------------------------------------------------------

@dataclass(frozen=True)
class QQResult:
    theoretical: np.ndarray
    sample: np.ndarray
    correlation: float
    n_excluded: int

    def to_csv(self) -> str:
        rows = ["theoretical,sample"]
        rows += [f"{x!r},{y!r}" for x, y in zip(self.theoretical.tolist(), self.sample.tolist())]
        return "\n".join(rows) + "\n"


def qq_points(t, quantile: Callable, censored=None) -> QQResult:
    """Q-Q point set of the uncensored sample against ``quantile``.

    Plotting positions are ``(i - 0.5) / n``.
    """
    t, cen = check_observations(t, censored)
    y = np.sort(t[cen == 0])
    n = len(y)
    if n < 3:
        raise ValueError("need at least 3 uncensored observations")
    p = (np.arange(1, n + 1) - 0.5) / n
    x = np.asarray(quantile(p), dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("theoretical quantile undefined at some plotting position")
    r = float(np.corrcoef(x, y)[0, 1])
    return QQResult(x, y, r, int(np.sum(cen == 1)))


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    correlation: float
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class TailDiagnostics:
    left: LineFit
    right: LineFit

    def to_csv(self) -> str:
        rows = ["tail,log_x,y"]
        rows += [f"left,{a!r},{b!r}" for a, b in zip(self.left.x.tolist(), self.left.y.tolist())]
        rows += [f"right,{a!r},{b!r}" for a, b in zip(self.right.x.tolist(), self.right.y.tolist())]
        return "\n".join(rows) + "\n"


def _line(x, y) -> LineFit:
    if len(x) < 3:
        raise ValueError("too few usable tail points")
    slope, intercept = np.polyfit(x, y, 1)
    return LineFit(float(slope), float(intercept), float(np.corrcoef(x, y)[0, 1]), x, y)


def tail_diagnostics(curve, left_fraction=0.2, right_fraction=0.2) -> TailDiagnostics:
    """Log-log cdf fit on the left tail and log(-log S) fit on the right tail.

    Both slopes estimate the Weibull shape of the smallest and largest
    component, respectively.
    """
    check_is_fitted(curve, "survival_")
    for frac in (left_fraction, right_fraction):
        if not 0 < frac <= 0.5:
            raise ValueError("tail fractions must lie in (0, 0.5]")
    t, s = curve.times_, curve.survival_
    if len(t) < 10:
        raise ValueError("need at least 10 drop points")
    keep = t > 0
    t, s = t[keep], s[keep]
    m = len(t)
    nl = max(3, int(math.ceil(left_fraction * m)))
    tl, fl = t[:nl], 1.0 - s[:nl]
    ok = (fl > 0) & (fl < 1)
    left = _line(np.log(tl[ok]), np.log(fl[ok]))
    nr = max(3, int(math.ceil(right_fraction * m)))
    tr, sr = t[m - nr:], s[m - nr:]
    ok = (sr > 0) & (sr < 1)
    right = _line(np.log(tr[ok]), np.log(-np.log(sr[ok])))
    return TailDiagnostics(left, right)


def mixture_from_params(weights, components, loglik=float("nan"), n_obs=0) -> WeibullMixture:
    """Rebuild a fitted mixture from stored parameters (no refitting)."""
    m = WeibullMixture(len(weights))
    m.weights_ = np.asarray(weights, dtype=float)
    m.components_ = [WeibullParams(*c) for c in components]
    m.n_components_ = len(weights)
    m.loglik_ = loglik
    m.loglik_history_ = [loglik]
    m.n_iter_ = 0
    m.converged_ = True
    m.collapsed_ = False
    m.n_obs_ = n_obs
    return m
