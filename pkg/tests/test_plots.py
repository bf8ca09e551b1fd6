import os
import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from vowelmetrics.metrics import ClarityScore, NormalizedPoint, VfdValue
from vowelmetrics.plots import (
    Svg,
    change_panels_svg,
    vai_dumbbell_svg,
    vowel_space_svg,
    write_plots,
)

GOLDEN = Path(__file__).parent / "golden"
# set VOWELMETRICS_REGEN_GOLDEN=1 to rewrite the reference files
REGEN = os.environ.get("VOWELMETRICS_REGEN_GOLDEN") == "1"

CENTRES = {"i": (-1.2, 1.5), "e:": (-0.5, 0.9), "E": (0.3, 0.4),
           "a:": (1.6, -0.3), "o:": (0.6, -1.0), "u": (-1.0, -1.4)}


def fixture_data():
    rng = np.random.default_rng(2024)
    points, vfd, clarity = [], [], []
    for g, spread in (("typical", 0.15), ("pre_surgery", 0.2), ("post_surgery", 0.35)):
        for s in ("S01", "S02"):
            spk = ("TS" if g == "typical" else "OC") + s[1:]
            for ph, (c1, c2) in CENTRES.items():
                for k in range(4):
                    tid = f"{spk}_{g}_{ph}_{k}"
                    z1, z2 = c1 + spread * rng.standard_normal(), c2 + spread * rng.standard_normal()
                    points.append(NormalizedPoint(tid, spk, g, ph, float(z1), float(z2)))
                    d = float(abs(rng.normal(spread, 0.05)) + 0.01)
                    vfd.append(VfdValue(tid, spk, g, ph, d, float(np.log(d))))
            clarity.append(ClarityScore(spk, g, float(rng.uniform(0.85, 1.1)),
                                        float(rng.uniform(2e5, 4e5)), {}))
    return points, vfd, clarity


def _check_golden(name, text):
    path = GOLDEN / name
    if REGEN:
        path.write_text(text, encoding="utf-8")
    assert path.read_text(encoding="utf-8") == text


@pytest.mark.parametrize("group", ["typical", "pre_surgery", "post_surgery"])
def test_vowel_space_golden(group):
    points, _, _ = fixture_data()
    _check_golden(f"vowel_space_{group}.svg", vowel_space_svg(points, group))


def test_dumbbell_golden():
    _, _, clarity = fixture_data()
    _check_golden("vai_dumbbell.svg", vai_dumbbell_svg(clarity))


def test_change_panels_golden():
    _, vfd, clarity = fixture_data()
    _check_golden("change_panels.svg", change_panels_svg(clarity, vfd))


def test_write_plots_files(tmp_path):
    points, vfd, clarity = fixture_data()
    paths = write_plots(tmp_path, clarity, vfd, points)
    assert sorted(p.name for p in paths) == sorted(
        ["vowel_space_typical.svg", "vowel_space_pre_surgery.svg", "vowel_space_post_surgery.svg",
         "vai_dumbbell.svg", "change_panels.svg"])
    for p in paths:
        ET.parse(p)


def _lines(svg):
    return [tuple(float(v) for v in m) for m in
            re.findall(r'<line x1="([-\d.]+)" y1="([-\d.]+)" x2="([-\d.]+)" y2="([-\d.]+)" stroke="#555555"', svg)]


def test_single_token_connector_has_zero_length():
    svg = vowel_space_svg([NormalizedPoint("t1", "S", "typical", "i", -1.0, 1.0),
                           NormalizedPoint("t2", "S", "typical", "u", 1.0, -1.0)], "typical")
    conns = _lines(svg)
    assert len(conns) == 2
    assert all(x1 == x2 and y1 == y2 for x1, y1, x2, y2 in conns)


def test_axes_orientation():
    # /i/ (low z1, high z2) sits top-left of /a:/ (high z1, low z2)
    svg = vowel_space_svg([NormalizedPoint("a", "S", "typical", "i", -1.0, 1.5),
                           NormalizedPoint("b", "S", "typical", "a:", 1.5, -0.5)], "typical")
    (xi, yi, _, _), (xa, ya, _, _) = _lines(svg)
    assert xi < xa and yi < ya


def test_empty_inputs_rejected():
    with pytest.raises(ValueError, match="empty"):
        vowel_space_svg([], "typical")
    with pytest.raises(ValueError, match="empty"):
        vai_dumbbell_svg([])
    with pytest.raises(ValueError, match="empty"):
        change_panels_svg([ClarityScore("TS01", "typical", 1.0, 1.0, {})], [])


def test_text_escaped():
    svg = Svg(10, 10, "a<b & c")
    svg.text(0, 0, "<i>")
    out = svg.render()
    assert "a&lt;b &amp; c" in out and "&lt;i&gt;" in out
    ET.fromstring(out)
