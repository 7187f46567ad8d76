import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from satrtd import plots
from satrtd.survival import kaplan_meier, km_histogram
from satrtd.weibull import QQResult, mixture_from_params, qq_points, weibull_quantile

NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def curve():
    rng = np.random.default_rng(0)
    t = np.concatenate([rng.weibull(2, 300) * 10, rng.weibull(1.5, 200) * 200])
    return kaplan_meier(t, (t > 400).astype(int))


def parse(svg):
    root = ET.fromstring(svg)
    assert root.tag == NS + "svg"
    return root


def test_histogram_bar_counts(curve):
    for log_scale in (False, True):
        h = km_histogram(curve, 25, log_scale)
        root = parse(plots.histogram_svg(h))
        bars = [r for r in root.iter(NS + "rect") if r.get("stroke-width") == "0.3"]
        assert len(bars) == int(np.sum(h.masses > 0))


def test_all_kinds_render_and_are_deterministic(curve):
    hl = km_histogram(curve, 25, True)
    mix = mixture_from_params([0.6, 0.4], [(2.0, 10.0, 0.0), (1.5, 200.0, 0.0)])
    qq = qq_points(curve.times_, lambda q: weibull_quantile((1.0, 50.0, 0.0), q))
    svgs = [plots.mixture_overlay_svg(hl, mix), plots.qq_svg(qq), plots.cdf_loglog_svg(curve),
            plots.survival_loglog_svg(curve), plots.tail_decay_svg(curve)]
    for svg in svgs:
        root = parse(svg)
        assert len(list(root.iter(NS + "polyline"))) + len(list(root.iter(NS + "circle"))) >= 1
        assert "nan" not in svg and "inf" not in svg
    again = [plots.mixture_overlay_svg(hl, mix), plots.qq_svg(qq), plots.cdf_loglog_svg(curve),
             plots.survival_loglog_svg(curve), plots.tail_decay_svg(curve)]
    assert svgs == again


def test_exponential_reference_present(curve):
    root = parse(plots.survival_loglog_svg(curve))
    lines = list(root.iter(NS + "polyline"))
    assert len(lines) == 2 and lines[1].get("stroke-dasharray")
    labels = [t.text for t in root.iter(NS + "text") if t.get("class") == "legend"]
    assert "exponential, equal mean" in labels


def test_qq_points_drawn():
    qq = QQResult(np.arange(5.0), np.arange(5.0), 1.0, 0)
    root = parse(plots.qq_svg(qq))
    assert len(list(root.iter(NS + "circle"))) == 5


def test_write_svg(tmp_path, curve):
    p = tmp_path / "x.svg"
    plots.write_svg(plots.cdf_loglog_svg(curve), p)
    assert p.read_text().startswith("<svg")
