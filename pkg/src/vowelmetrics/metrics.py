"""Vowel-space metrics: Lobanov normalization, VAI, VSA and vowel formant dispersion.

Clarity is summarized per speaker-session by the vowel articulation index
(VAI) computed from corner-vowel formants in Hz, with the vowel space area
(VSA) as a supporting measure. Variability is the per-token Euclidean
distance in Lobanov space from a token to the median of its own vowel
category within the session.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Mapping, Sequence

import numpy as np

from .formants import FormantMeasurement
from .ingest import CORNER_VOWELS

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-9


class DegenerateScopeError(ValueError):
    pass


class MissingVowelError(ValueError):
    pass


@dataclass(frozen=True)
class NormalizedPoint:
    token_id: str
    speaker_id: str
    group: str
    phoneme: str
    z1: float
    z2: float


@dataclass(frozen=True)
class PhonemeCenter:
    phoneme: str
    median_z1: float
    median_z2: float


@dataclass(frozen=True)
class VfdValue:
    token_id: str
    speaker_id: str
    group: str
    phoneme: str
    vfd: float
    log_vfd: float


@dataclass(frozen=True)
class ClarityScore:
    speaker_id: str
    group: str
    vai: float
    vsa_hz2: float
    corner_means: dict


def _usable(measurements: Iterable[FormantMeasurement]) -> list[FormantMeasurement]:
    return [m for m in measurements if not m.flagged]


def session_key(m) -> tuple[str, str]:
    return (m.speaker_id, m.group)


def lobanov_normalize(measurements: Sequence[FormantMeasurement]) -> list[NormalizedPoint]:
    """z-score F1 and F2 over every unflagged token passed in (one scope).

    Uses the sample SD (n - 1). Raises :class:`DegenerateScopeError` when
    either formant has zero spread or fewer than two tokens remain.
    """
    ms = _usable(measurements)
    if len(ms) < 2:
        raise DegenerateScopeError("degenerate scope: fewer than two unflagged tokens")
    f = np.array([[m.f1_hz, m.f2_hz] for m in ms])
    sd = f.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise DegenerateScopeError("degenerate scope: zero formant SD")
    z = (f - f.mean(axis=0)) / sd
    return [NormalizedPoint(m.token_id, m.speaker_id, m.group, m.phoneme, float(a), float(b))
            for m, (a, b) in zip(ms, z)]


def normalize_corpus(measurements: Sequence[FormantMeasurement], scope: str = "session",
                     skipped: list[str] | None = None) -> list[NormalizedPoint]:
    """Lobanov-normalize per speaker-session (default) or per speaker across sessions.

    Degenerate scopes raise, unless ``skipped`` is given, in which case they
    are recorded there and left out.
    """
    if scope == "session":
        keyfn = session_key
    elif scope == "speaker":
        keyfn = lambda m: m.speaker_id  # noqa: E731
    else:
        raise ValueError(f"unknown normalization scope {scope!r}")
    groups = defaultdict(list)
    for m in measurements:
        groups[keyfn(m)].append(m)
    points = {}
    for key in sorted(groups):
        try:
            scoped = lobanov_normalize(groups[key])
        except DegenerateScopeError as exc:
            if skipped is None:
                raise
            skipped.append(f"{key}: {exc}")
            continue
        for p in scoped:
            points[p.token_id] = p
    return [points[m.token_id] for m in measurements if m.token_id in points]


def corner_formants(measurements: Sequence[FormantMeasurement], stat: str = "mean",
                    phonemes: Sequence[str] = CORNER_VOWELS) -> dict[str, tuple[float, float]]:
    """Per-vowel (F1, F2) in Hz from unflagged tokens, by mean or median."""
    agg = {"mean": np.mean, "median": np.median}[stat]
    out = {}
    for ph in phonemes:
        vals = np.array([[m.f1_hz, m.f2_hz] for m in _usable(measurements) if m.phoneme == ph])
        if vals.size == 0:
            raise MissingVowelError(f"missing corner vowel /{ph}/")
        out[ph] = (float(agg(vals[:, 0])), float(agg(vals[:, 1])))
    return out


def vai_from_corners(f1_i: float, f2_i: float, f1_a: float, f2_a: float,
                     f1_u: float, f2_u: float) -> float:
    return (f2_i + f1_a) / (f1_i + f1_u + f2_u + f2_a)


def compute_vai(measurements: Sequence[FormantMeasurement], stat: str = "mean") -> float:
    """Vowel articulation index of one scope from corner vowels /i/, /a:/, /u/ in Hz.

    ``VAI = (F2_i + F1_a) / (F1_i + F1_u + F2_u + F2_a)``
    """
    c = corner_formants(measurements, stat)
    return vai_from_corners(*c["i"], *c["a:"], *c["u"])


def convex_hull(points) -> np.ndarray:
    """Vertices of the convex hull in counter-clockwise order (monotone chain)."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def compute_vsa(points) -> float:
    """Area (Hz^2) of the convex hull of per-vowel mean (F2, F1) points.

    ``points`` is a mapping vowel -> (F1, F2) or a sequence of (F2, F1)
    pairs. Fewer than three distinct points give 0 with a warning.
    """
    if isinstance(points, Mapping):
        points = [(f2, f1) for f1, f2 in points.values()]
    hull = convex_hull(points)
    if len(hull) < 3:
        log.warning("vowel space area needs three distinct points; returning 0")
        return 0.0
    return polygon_area(hull)


def phoneme_centers(points: Sequence[NormalizedPoint],
                    phonemes: Sequence[str] | None = None) -> dict[str, PhonemeCenter]:
    """Componentwise median of (z1, z2) per vowel."""
    by_ph = defaultdict(list)
    for p in points:
        by_ph[p.phoneme].append((p.z1, p.z2))
    wanted = sorted(by_ph) if phonemes is None else list(phonemes)
    out = {}
    for ph in wanted:
        if ph not in by_ph:
            raise MissingVowelError(f"/{ph}/ absent from scope")
        z = np.array(by_ph[ph])
        out[ph] = PhonemeCenter(ph, float(np.median(z[:, 0])), float(np.median(z[:, 1])))
    return out


def compute_vfd(points: Sequence[NormalizedPoint],
                centers: Mapping[str, PhonemeCenter]) -> list[VfdValue]:
    out = []
    for p in points:
        c = centers[p.phoneme]
        d = math.hypot(p.z1 - c.median_z1, p.z2 - c.median_z2)
        out.append(VfdValue(p.token_id, p.speaker_id, p.group, p.phoneme, d,
                            math.log(max(d, LOG_FLOOR))))
    return out


# ----------------------------------------------------------- corpus level


@dataclass
class CorpusMetrics:
    clarity: list[ClarityScore]
    points: list[NormalizedPoint]
    vfd: list[VfdValue]
    omitted: list[str]


def corpus_metrics(measurements: Sequence[FormantMeasurement], *, norm_scope: str = "session",
                   corner_stat: str = "mean") -> CorpusMetrics:
    """Clarity per speaker-session and VFD per token for a whole corpus.

    VFD centres are always per session, whatever the normalization scope.
    Sessions missing a corner vowel get no clarity row; the reason is kept
    in ``omitted``.
    """
    ordered = sorted(measurements, key=session_key)
    sessions = {k: list(g) for k, g in groupby(ordered, key=session_key)}

    clarity, omitted = [], []
    for (speaker, group), ms in sessions.items():
        try:
            corners = corner_formants(ms, corner_stat)
        except MissingVowelError as exc:
            omitted.append(f"{speaker}/{group}: {exc}")
            continue
        vai = vai_from_corners(*corners["i"], *corners["a:"], *corners["u"])
        means = corner_formants(ms, "mean", sorted({m.phoneme for m in _usable(ms)}))
        clarity.append(ClarityScore(speaker, group, vai, compute_vsa(means), corners))

    points = normalize_corpus(measurements, norm_scope, skipped=omitted)
    by_session = defaultdict(list)
    for p in points:
        by_session[(p.speaker_id, p.group)].append(p)
    vfd = {}
    for key in sorted(by_session):
        pts = by_session[key]
        for v in compute_vfd(pts, phoneme_centers(pts)):
            vfd[v.token_id] = v
    return CorpusMetrics(clarity, points, [vfd[p.token_id] for p in points], omitted)
