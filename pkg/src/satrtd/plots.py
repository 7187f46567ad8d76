"""Minimal deterministic SVG rendering for run-time distribution figures.

The output depends only on the input numbers, so rerunning an analysis
reproduces every figure byte for byte.
"""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

W, H = 480, 320
ML, MR, MT, MB = 60, 20, 30, 45


class _Axes:
    def __init__(self, x0, x1, y0, y1, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        self.x0, self.x1 = self._fx(x0), self._fx(x1)
        self.y0, self.y1 = self._fy(y0), self._fy(y1)
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1

    def _fx(self, x):
        return math.log10(x) if self.logx else x

    def _fy(self, y):
        return math.log10(y) if self.logy else y

    def px(self, x):
        return ML + (self._fx(x) - self.x0) / (self.x1 - self.x0) * (W - ML - MR)

    def py(self, y):
        return H - MB - (self._fy(y) - self.y0) / (self.y1 - self.y0) * (H - MT - MB)


def _num(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.3g}"


class Figure:
    def __init__(self, title, xlabel, ylabel, ax: _Axes):
        self.ax = ax
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
            f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="11" '
            f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
            f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" '
            f'fill="none" stroke="black"/>',
        ]
        self._ticks()

    def _ticks(self):
        ax = self.ax
        for i in range(5):
            fx = ax.x0 + (ax.x1 - ax.x0) * i / 4
            x = 10 ** fx if ax.logx else fx
            self.parts.append(f'<text x="{_num(ax.px(x))}" y="{H - MB + 14}" text-anchor="middle" '
                              f'font-size="9">{_tick(x)}</text>')
            fy = ax.y0 + (ax.y1 - ax.y0) * i / 4
            y = 10 ** fy if ax.logy else fy
            self.parts.append(f'<text x="{ML - 4}" y="{_num(ax.py(y) + 3)}" text-anchor="end" '
                              f'font-size="9">{_tick(y)}</text>')

    def bars(self, edges, heights, fill="#7799cc"):
        for lo, hi, h in zip(edges[:-1], edges[1:], heights):
            if h <= 0:
                continue
            x0, x1 = self.ax.px(lo), self.ax.px(hi)
            y0, y1 = self.ax.py(h), self.ax.py(self.ax.y0 if not self.ax.logy else 10 ** self.ax.y0)
            self.parts.append(f'<rect x="{_num(x0)}" y="{_num(y0)}" width="{_num(max(x1 - x0, 0))}" '
                              f'height="{_num(max(y1 - y0, 0))}" fill="{fill}" stroke="black" '
                              f'stroke-width="0.3"/>')
        return self

    def line(self, x, y, color="black", dash=None, label=None):
        pts = " ".join(f"{_num(self.ax.px(a))},{_num(self.ax.py(b))}" for a, b in zip(x, y))
        style = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"{style}/>')
        if label:
            self._legend(label, color)
        return self

    def points(self, x, y, color="black", label=None):
        for a, b in zip(x, y):
            self.parts.append(f'<circle cx="{_num(self.ax.px(a))}" cy="{_num(self.ax.py(b))}" '
                              f'r="1.2" fill="{color}"/>')
        if label:
            self._legend(label, color)
        return self

    def _legend(self, label, color):
        n = sum(p.startswith("<text class=\"legend\"") for p in self.parts)
        y = MT + 14 + 13 * n
        self.parts.append(f'<text class="legend" x="{W - MR - 6}" y="{y}" text-anchor="end" '
                          f'font-size="10" fill="{color}">{escape(label)}</text>')

    def svg(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _finite_pos(a):
    a = np.asarray(a, dtype=float)
    return a[np.isfinite(a) & (a > 0)]


def histogram_svg(hist, title="KM histogram", xlabel="run time") -> str:
    """Bars of a mass-conserving KM histogram; log scale follows ``hist.log_scale``."""
    edges = np.asarray(hist.edges, dtype=float)
    heights = np.asarray(hist.masses, dtype=float)
    ax = _Axes(edges[0], edges[-1], 0.0, max(float(heights.max(initial=0)), 1e-12),
               logx=hist.log_scale)
    return Figure(title, xlabel + (" (log)" if hist.log_scale else ""), "probability mass", ax) \
        .bars(edges, heights).svg()


def mixture_overlay_svg(hist, mixture, title="mixture fit", xlabel="run time") -> str:
    """Histogram with the mixture's probability mass per bin drawn on top."""
    edges = np.asarray(hist.edges, dtype=float)
    heights = np.asarray(hist.masses, dtype=float)
    model = np.diff(mixture.cdf(edges))
    ax = _Axes(edges[0], edges[-1], 0.0, max(float(heights.max(initial=0)), float(model.max()), 1e-12),
               logx=hist.log_scale)
    centers = np.sqrt(edges[:-1] * edges[1:]) if hist.log_scale else 0.5 * (edges[:-1] + edges[1:])
    return Figure(title, xlabel, "probability mass", ax).bars(edges, heights) \
        .line(centers, model, color="#cc3333", label=f"{mixture.n_components_}-component Weibull").svg()


def qq_svg(qq, title="Q-Q plot") -> str:
    lo = float(min(qq.theoretical.min(), qq.sample.min()))
    hi = float(max(qq.theoretical.max(), qq.sample.max()))
    ax = _Axes(lo, hi, lo, hi)
    return Figure(title, "theoretical quantile", "sample quantile", ax) \
        .line([lo, hi], [lo, hi], color="#999999", dash="4 3") \
        .points(qq.theoretical, qq.sample, label=f"r = {qq.correlation:.5f}").svg()


def cdf_loglog_svg(curve, title="empirical cdf (log-log)") -> str:
    """log F against log x with an exponential of equal mean for reference."""
    t = np.asarray(curve.times_, dtype=float)
    f = 1.0 - np.asarray(curve.survival_, dtype=float)
    keep = (t > 0) & (f > 0)
    t, f = t[keep], f[keep]
    mean = float(np.mean(t))
    ref = -np.expm1(-t / mean)
    ax = _Axes(t.min(), t.max(), min(f.min(), ref.min()), 1.0, logx=True, logy=True)
    return Figure(title, "run time (log)", "F (log)", ax).line(t, f, label="KM") \
        .line(t, ref, color="#3366cc", dash="4 3", label="exponential, equal mean").svg()


def survival_loglog_svg(curve, title="survival (log-log)") -> str:
    t = np.asarray(curve.times_, dtype=float)
    s = np.asarray(curve.survival_, dtype=float)
    keep = (t > 0) & (s > 0)
    t, s = t[keep], s[keep]
    mean = float(np.mean(t))
    ref = np.exp(-t / mean)
    lo = max(min(s.min(), ref[ref > 0].min()), 1e-300)
    ax = _Axes(t.min(), t.max(), lo, 1.0, logx=True, logy=True)
    return Figure(title, "run time (log)", "S (log)", ax).line(t, s, label="KM") \
        .line(t, np.maximum(ref, lo), color="#3366cc", dash="4 3", label="exponential, equal mean").svg()


def tail_decay_svg(curve, title="right tail: log(-log S)") -> str:
    t = np.asarray(curve.times_, dtype=float)
    s = np.asarray(curve.survival_, dtype=float)
    keep = (t > 0) & (s > 0) & (s < 1)
    t, y = t[keep], np.log(-np.log(s[keep]))
    mean = float(np.mean(curve.times_))
    ax = _Axes(t.min(), t.max(), min(y.min(), math.log(t.min() / mean)),
               max(y.max(), math.log(t.max() / mean)), logx=True)
    return Figure(title, "run time (log)", "log(-log S)", ax).line(t, y, label="KM") \
        .line(t, np.log(t / mean), color="#3366cc", dash="4 3", label="exponential, equal mean").svg()


def write_svg(svg: str, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
