"""Deterministic SVG figures: vowel spaces, VAI dumbbells and per-speaker change bars.

Everything is plain text built from fixed-precision numbers, so the same
inputs always give the same bytes.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .ingest import GROUPS, VOWELS
from .metrics import ClarityScore, NormalizedPoint, VfdValue

PALETTE = {
    "i": "#1b9e77", "e:": "#d95f02", "E": "#7570b3",
    "a:": "#e7298a", "o:": "#66a61e", "u": "#e6ab02",
}
GROUP_COLORS = {"typical": "#4d4d4d", "pre_surgery": "#2166ac", "post_surgery": "#b2182b"}
FONT = "font-family=\"Helvetica,Arial,sans-serif\""


def _n(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


class Svg:
    def __init__(self, width: int, height: int, title: str):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f"<title>{escape(title)}</title>",
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        ]

    def line(self, x1, y1, x2, y2, stroke="#000000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" '
                          f'stroke="{stroke}" stroke-width="{_n(width)}"{d}/>')

    def circle(self, cx, cy, r, fill, stroke="none", opacity=1.0):
        self.parts.append(f'<circle cx="{_n(cx)}" cy="{_n(cy)}" r="{_n(r)}" fill="{fill}" '
                          f'stroke="{stroke}" fill-opacity="{_n(opacity)}"/>')

    def rect(self, x, y, w, h, fill):
        if h < 0:
            y, h = y + h, -h
        self.parts.append(f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" '
                          f'fill="{fill}"/>')

    def text(self, x, y, s, size=12, anchor="middle", weight="normal"):
        self.parts.append(f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" {FONT} '
                          f'text-anchor="{anchor}" font-weight="{weight}">{escape(str(s))}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render(), encoding="utf-8")
        return path


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(n, 1)
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10)), key=lambda s: abs(s - raw))
    start = np.ceil(lo / step) * step
    return [round(float(v), 10) for v in np.arange(start, hi + step * 1e-9, step)]


def _padded(values, frac=0.08) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = (hi - lo) * frac
    return lo - pad, hi + pad


def _phonemes(points) -> list[str]:
    present = {p.phoneme for p in points}
    return [v for v in VOWELS if v in present] + sorted(present - set(VOWELS))


# ------------------------------------------------------------ vowel space


def vowel_space_svg(points: Sequence[NormalizedPoint], group: str) -> str:
    """Tokens joined to their vowel's median; F2 falls rightward, F1 falls upward."""
    pts = [p for p in points if p.group == group]
    if not pts:
        raise ValueError("empty input")
    W, H, L, R, T, B = 560, 480, 60, 100, 40, 50
    pw, ht = W - L - R, H - T - B
    z1lo, z1hi = _padded([p.z1 for p in points])
    z2lo, z2hi = _padded([p.z2 for p in points])

    def x(z2):
        return L + (z2hi - z2) / (z2hi - z2lo) * pw

    def y(z1):
        return T + (z1 - z1lo) / (z1hi - z1lo) * ht

    svg = Svg(W, H, f"Vowel space: {group}")
    svg.text(L + pw / 2, 24, f"Vowel space ({group.replace('_', ' ')})", 14, weight="bold")
    svg.line(L, T + ht, L + pw, T + ht)
    svg.line(L, T, L, T + ht)
    for t in _ticks(z2lo, z2hi):
        svg.line(x(t), T + ht, x(t), T + ht + 4)
        svg.text(x(t), T + ht + 17, f"{t:g}", 10)
    for t in _ticks(z1lo, z1hi):
        svg.line(L - 4, y(t), L, y(t))
        svg.text(L - 7, y(t) + 3, f"{t:g}", 10, anchor="end")
    svg.text(L + pw / 2, H - 10, "F2 (Lobanov z)", 12)
    svg.parts.append(f'<text x="16" y="{_n(T + ht / 2)}" font-size="12" {FONT} text-anchor="middle" '
                     f'transform="rotate(-90 16 {_n(T + ht / 2)})">F1 (Lobanov z)</text>')

    by_ph = defaultdict(list)
    for p in pts:
        by_ph[p.phoneme].append(p)
    order = _phonemes(pts)
    medians = {ph: (float(np.median([p.z1 for p in by_ph[ph]])),
                    float(np.median([p.z2 for p in by_ph[ph]]))) for ph in order}
    for ph in order:
        m1, m2 = medians[ph]
        for p in by_ph[ph]:
            svg.line(x(p.z2), y(p.z1), x(m2), y(m1), stroke="#555555", width=0.6)
    for ph in order:
        for p in by_ph[ph]:
            svg.circle(x(p.z2), y(p.z1), 2.5, PALETTE.get(ph, "#999999"), opacity=0.8)
    for ph in order:
        m1, m2 = medians[ph]
        svg.circle(x(m2), y(m1), 5, PALETTE.get(ph, "#999999"), stroke="#000000")
        svg.text(x(m2) + 8, y(m1) - 6, f"/{ph}/", 12, anchor="start", weight="bold")
    for k, ph in enumerate(order):
        ly = T + 10 + 18 * k
        svg.circle(W - R + 20, ly, 5, PALETTE.get(ph, "#999999"))
        svg.text(W - R + 32, ly + 4, f"/{ph}/", 11, anchor="start")
    return svg.render()


# ---------------------------------------------------------------- dumbbell


def vai_dumbbell_svg(clarity: Sequence[ClarityScore]) -> str:
    """VAI per speaker: pre and post joined by a bar; typical speakers as single dots."""
    if not clarity:
        raise ValueError("empty input")
    vai = defaultdict(dict)
    for c in clarity:
        vai[c.speaker_id][c.group] = c.vai
    speakers = sorted(vai, key=lambda s: ("pre_surgery" not in vai[s] and "post_surgery" not in vai[s], s))
    W, L, R, T, B, row = 560, 90, 30, 50, 50, 18
    H = T + B + row * len(speakers)
    pw = W - L - R
    lo, hi = _padded([c.vai for c in clarity], 0.1)

    def x(v):
        return L + (v - lo) / (hi - lo) * pw

    svg = Svg(W, H, "VAI per speaker and session")
    svg.text(L + pw / 2, 22, "VAI per speaker and session", 14, weight="bold")
    y_axis = T + row * len(speakers)
    svg.line(L, y_axis, L + pw, y_axis)
    for t in _ticks(lo, hi):
        svg.line(x(t), T - 6, x(t), y_axis, stroke="#dddddd")
        svg.text(x(t), y_axis + 15, f"{t:g}", 10)
    svg.text(L + pw / 2, H - 12, "VAI", 12)
    for k, g in enumerate(GROUPS):
        lx = L + k * 150
        svg.circle(lx + 6, 36, 4, GROUP_COLORS[g])
        svg.text(lx + 14, 40, g.replace("_", " "), 11, anchor="start")
    for k, s in enumerate(speakers):
        yy = T + row * k + row / 2
        svg.text(L - 8, yy + 4, s, 11, anchor="end")
        d = vai[s]
        if "pre_surgery" in d and "post_surgery" in d:
            svg.line(x(d["pre_surgery"]), yy, x(d["post_surgery"]), yy, stroke="#888888", width=2)
        for g in GROUPS:
            if g in d:
                svg.circle(x(d[g]), yy, 4.5, GROUP_COLORS[g])
    return svg.render()


# ------------------------------------------------------------------ change


def _bar_panel(svg: Svg, top: float, height: float, title: str, labels, values, color):
    L, R = 70, 20
    pw = svg.width - L - R
    vmax = max([abs(v) for v in values] + [1e-12]) * 1.15
    mid = top + height / 2
    svg.text(L + pw / 2, top - 8, title, 13, weight="bold")
    svg.line(L, mid, L + pw, mid, stroke="#000000")
    svg.line(L, top, L, top + height, stroke="#000000")
    for t in (-vmax / 1.15, 0.0, vmax / 1.15):
        yy = mid - t / vmax * height / 2
        svg.line(L - 4, yy, L, yy)
        svg.text(L - 7, yy + 3, f"{t:.3g}", 9, anchor="end")
    n = len(labels)
    slot = pw / max(n, 1)
    for k, (lab, v) in enumerate(zip(labels, values)):
        bx = L + slot * k + slot * 0.15
        svg.rect(bx, mid, slot * 0.7, -v / vmax * height / 2, color)
        svg.text(L + slot * (k + 0.5), top + height + 14, lab, 10)


def change_panels_svg(clarity: Sequence[ClarityScore], vfd: Sequence[VfdValue],
                      phoneme: str = "i") -> str:
    """Post minus pre per patient: VAI on top, mean /i/ VFD below."""
    vai = defaultdict(dict)
    for c in clarity:
        vai[c.speaker_id][c.group] = c.vai
    acc = defaultdict(list)
    for v in vfd:
        if v.phoneme == phoneme:
            acc[(v.speaker_id, v.group)].append(v.vfd)
    mean_vfd = {k: float(np.mean(a)) for k, a in acc.items()}
    speakers = sorted({s for (s, g) in mean_vfd if g == "pre_surgery"}
                      & {s for (s, g) in mean_vfd if g == "post_surgery"}
                      | {s for s, d in vai.items() if "pre_surgery" in d and "post_surgery" in d})
    if not speakers:
        raise ValueError("empty input: no speaker has both pre- and post-surgery data")
    d_vai = [vai[s]["post_surgery"] - vai[s]["pre_surgery"]
             if {"pre_surgery", "post_surgery"} <= set(vai[s]) else 0.0 for s in speakers]
    d_vfd = [mean_vfd[(s, "post_surgery")] - mean_vfd[(s, "pre_surgery")]
             if (s, "pre_surgery") in mean_vfd and (s, "post_surgery") in mean_vfd else 0.0
             for s in speakers]
    W = max(420, 70 + 20 + 40 * len(speakers))
    svg = Svg(W, 460, "Per-speaker change after surgery")
    _bar_panel(svg, 40, 160, "Δ VAI (post - pre)", speakers, d_vai, "#2166ac")
    _bar_panel(svg, 270, 160, f"Δ mean VFD /{phoneme}/ (post - pre)", speakers, d_vfd, "#b2182b")
    return svg.render()


# ------------------------------------------------------------------ driver


def write_plots(out_dir, clarity: Sequence[ClarityScore], vfd: Sequence[VfdValue],
                points: Sequence[NormalizedPoint]) -> list[Path]:
    if not points and not clarity:
        raise ValueError("empty input")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    present = {p.group for p in points}
    for g in [g for g in GROUPS if g in present] + sorted(present - set(GROUPS)):
        p = out_dir / f"vowel_space_{g}.svg"
        p.write_text(vowel_space_svg(points, g), encoding="utf-8")
        paths.append(p)
    if clarity:
        p = out_dir / "vai_dumbbell.svg"
        p.write_text(vai_dumbbell_svg(clarity), encoding="utf-8")
        paths.append(p)
    try:
        text = change_panels_svg(clarity, vfd)
    except ValueError:
        pass
    else:
        p = out_dir / "change_panels.svg"
        p.write_text(text, encoding="utf-8")
        paths.append(p)
    return paths
