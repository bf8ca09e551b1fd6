"""Group contrasts on VAI and log-VFD with outlier trimming and FDR control.

Speaker-level contrasts stand in for mixed-effects pairwise comparisons:
pre- vs post-surgery is a paired t-test over patients, and each patient
session is compared with typical speakers by Welch's t-test. p-values are
Benjamini-Hochberg adjusted within each response family.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .ingest import VOWELS

log = logging.getLogger(__name__)

ALPHA = 0.05

# (label, first group, second group, paired); estimates are first minus second
CONTRASTS = (
    ("post_surgery - pre_surgery", "post_surgery", "pre_surgery", True),
    ("pre_surgery - typical", "pre_surgery", "typical", False),
    ("post_surgery - typical", "post_surgery", "typical", False),
)


class DegenerateVarianceError(ValueError):
    pass


# ------------------------------------------------------------ t distribution


def _betacf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-16) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc(0.5 * df, 0.5, df / (df + t * t)))


def t_cdf(t: float, df: float) -> float:
    half = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - half if t > 0 else half


# ------------------------------------------------------------------ results


@dataclass
class ComparisonResult:
    contrast: str
    estimate: float
    statistic: float
    df: float
    p_raw: float
    p_adj: float = math.nan
    paired: bool = False
    response: str = ""
    phoneme: str = ""
    n_a: int = 0
    n_b: int = 0


@dataclass
class Cell:
    key: Hashable
    values: list[float]
    ids: list[str] | None = None

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        if self.ids is None:
            self.ids = [f"{self.key}#{i}" for i in range(len(self.values))]
        if len(self.ids) != len(self.values):
            raise ValueError("ids and values differ in length")


@dataclass
class TrimReport:
    n_total: int
    n_removed: int
    removed_ids: list[str] = field(default_factory=list)

    @property
    def fraction(self) -> float:
        return self.n_removed / self.n_total if self.n_total else 0.0


def trim_outliers(cells: Sequence[Cell], threshold_sd: float = 2.5) -> tuple[list[Cell], TrimReport]:
    """Drop values more than ``threshold_sd`` sample SDs from their cell mean.

    One pass only; the trimmed cells are not re-examined. Cells with fewer
    than two values or zero spread are left intact.
    """
    out, removed, total = [], [], 0
    for cell in cells:
        v = np.asarray(cell.values)
        total += v.size
        keep = np.ones(v.size, dtype=bool)
        if v.size >= 2:
            sd = v.std(ddof=1)
            if sd > 0:
                keep = np.abs(v - v.mean()) <= threshold_sd * sd
        removed.extend(i for i, k in zip(cell.ids, keep) if not k)
        out.append(Cell(cell.key, v[keep].tolist(), [i for i, k in zip(cell.ids, keep) if k]))
    return out, TrimReport(total, len(removed), removed)


def trim_residuals(ids: Sequence[str], values: Sequence[float], cells: Sequence[Hashable],
                   units: Sequence[Hashable], threshold_sd: float = 2.5) -> tuple[list[bool], TrimReport]:
    """Drop values whose residual from an additive cell + unit fit exceeds ``threshold_sd``.

    The fitted value is the cell mean plus the unit's mean deviation from
    its cell means (one backfitting step, a stand-in for a random
    intercept). The residual SD is pooled over all values, so the cutoff is
    the same for every cell. Returns a keep-mask aligned with ``ids``.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if not len(ids) == len(cells) == len(units) == n:
        raise ValueError("ids, values, cells and units must have equal length")
    keep = np.ones(n, dtype=bool)
    if n >= 2:
        cell_mean = _group_mean(v, cells)
        dev = v - cell_mean
        resid = dev - _group_mean(dev, units)
        sd = resid.std(ddof=1)
        # relative guard: exact fits leave rounding-level residuals
        if sd > 1e-12 * max(1.0, float(np.abs(v).max())):
            keep = np.abs(resid) <= threshold_sd * sd
    removed = [i for i, k in zip(ids, keep) if not k]
    return keep.tolist(), TrimReport(n, len(removed), removed)


def _group_mean(v: np.ndarray, keys: Sequence[Hashable]) -> np.ndarray:
    sums: dict = defaultdict(float)
    counts: dict = defaultdict(int)
    for k, x in zip(keys, v):
        sums[k] += x
        counts[k] += 1
    return np.array([sums[k] / counts[k] for k in keys])


def welch_t(a: Sequence[float], b: Sequence[float], contrast: str = "a - b") -> ComparisonResult:
    """Welch two-sample t-test of mean(a) - mean(b), two-sided."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0:
        raise DegenerateVarianceError("zero variance in both groups")
    est = float(a.mean() - b.mean())
    t = float(est / math.sqrt(se2))
    df = float(se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1)))
    return ComparisonResult(contrast, est, t, df, t_sf_two_sided(t, df), paired=False,
                            n_a=int(a.size), n_b=int(b.size))


def _pairs(first, second) -> tuple[np.ndarray, np.ndarray, list]:
    if isinstance(first, Mapping):
        keys = sorted(set(first) | set(second))
        complete = [k for k in keys if k in first and k in second
                    and np.isfinite(first[k]) and np.isfinite(second[k])]
        missing = [k for k in keys if k not in complete]
        x = np.array([first[k] for k in complete], dtype=float)
        y = np.array([second[k] for k in complete], dtype=float)
        return x, y, missing
    x = np.array([np.nan if v is None else v for v in first], dtype=float)
    y = np.array([np.nan if v is None else v for v in second], dtype=float)
    if x.shape != y.shape:
        raise ValueError("paired sequences differ in length")
    ok = np.isfinite(x) & np.isfinite(y)
    return x[ok], y[ok], list(np.flatnonzero(~ok))


def paired_t(first, second, contrast: str = "first - second") -> ComparisonResult:
    """Paired t-test on ``first - second``.

    Accepts two mappings keyed by speaker or two aligned sequences;
    incomplete pairs (missing key, None or NaN) are excluded and logged.
    """
    x, y, missing = _pairs(first, second)
    if missing:
        log.info("paired_t %s: excluded incomplete pairs %s", contrast, missing)
    if x.size < 2:
        raise ValueError("at least two complete pairs required")
    d = x - y
    sd = d.std(ddof=1)
    if sd == 0:
        raise DegenerateVarianceError("no variation in paired differences")
    est = float(d.mean())
    t = float(est / (sd / math.sqrt(d.size)))
    df = float(d.size - 1)
    return ComparisonResult(contrast, est, t, df, t_sf_two_sided(t, df), paired=True,
                            n_a=int(d.size), n_b=int(d.size))


def fdr_adjust(p_values) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values, in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise ValueError("p-values must be one-dimensional")
    if np.any(~(p >= 0) | ~(p <= 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    scaled = m * p[order] / np.arange(1, m + 1)
    q = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    out = np.empty(m)
    out[order] = q
    return out


# ----------------------------------------------------------------- analysis


@dataclass
class Descriptive:
    cell: str
    n: int
    mean: float
    sd: float


@dataclass
class AnalysisResult:
    results: list[ComparisonResult]
    descriptives: list[Descriptive]
    trim: TrimReport
    gaps: list[dict]
    vai_trim: TrimReport = field(default_factory=lambda: TrimReport(0, 0))

    def family(self, response: str) -> list[ComparisonResult]:
        return [r for r in self.results if r.response == response]

    def get(self, response: str, contrast: str, phoneme: str = "") -> ComparisonResult | None:
        for r in self.results:
            if r.response == response and r.contrast == contrast and r.phoneme == phoneme:
                return r
        return None


def _describe(label: str, values) -> Descriptive:
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if v.size >= 2 else math.nan
    return Descriptive(label, int(v.size), float(v.mean()) if v.size else math.nan, sd)


def _contrast(response: str, phoneme: str, label: str, by_group: Mapping[str, Mapping[str, float]],
              g1: str, g2: str, paired: bool, gaps: list) -> ComparisonResult | None:
    first, second = by_group.get(g1, {}), by_group.get(g2, {})
    try:
        if not first or not second:
            missing = g1 if not first else g2
            raise ValueError(f"group {missing} absent")
        if paired:
            res = paired_t(first, second, label)
        else:
            res = welch_t(list(first.values()), list(second.values()), label)
    except ValueError as exc:
        gaps.append({"response": response, "phoneme": phoneme, "contrast": label,
                     "reason": str(exc)})
        log.warning("%s %s %s: %s", response, phoneme, label, exc)
        return None
    res.response, res.phoneme = response, phoneme
    return res


def _adjust(family: list[ComparisonResult]) -> None:
    if family:
        for r, q in zip(family, fdr_adjust([r.p_raw for r in family])):
            r.p_adj = float(max(q, r.p_raw))  # guards float rounding


def run_analysis(clarity: Sequence, vfd: Sequence, *, threshold_sd: float = 2.5) -> AnalysisResult:
    """Both contrast families plus descriptives.

    ``clarity`` rows need ``speaker_id``, ``group``, ``vai``; ``vfd`` rows
    need ``token_id``, ``speaker_id``, ``group``, ``phoneme``, ``log_vfd``.

    Each response is trimmed first with :func:`trim_residuals`: VAI on a
    group + speaker fit, log-VFD on a (group x vowel) + speaker fit.
    Trimmed log-VFD is averaged per speaker-session and vowel. A patient
    whose pre or post VAI was trimmed drops out of the paired contrast.
    Missing groups or cells leave explicit gaps.
    """
    gaps: list[dict] = []
    descriptives: list[Descriptive] = []
    results: list[ComparisonResult] = []

    clarity = list(clarity)
    keep, vai_report = trim_residuals(
        [f"{r.speaker_id}/{r.group}" for r in clarity], [float(r.vai) for r in clarity],
        [r.group for r in clarity], [r.speaker_id for r in clarity], threshold_sd)
    vai_by_group: dict[str, dict[str, float]] = defaultdict(dict)
    for row, k in zip(clarity, keep):
        if k:
            vai_by_group[row.group][row.speaker_id] = float(row.vai)
    for g in ("typical", "pre_surgery", "post_surgery"):
        if g in vai_by_group:
            descriptives.append(_describe(f"vai/{g}", list(vai_by_group[g].values())))
    vai_family = [r for label, g1, g2, paired in CONTRASTS
                  if (r := _contrast("vai", "", label, vai_by_group, g1, g2, paired, gaps))]
    _adjust(vai_family)
    results.extend(vai_family)

    vfd = list(vfd)
    keep, report = trim_residuals(
        [r.token_id for r in vfd], [float(r.log_vfd) for r in vfd],
        [(r.group, r.phoneme) for r in vfd], [r.speaker_id for r in vfd], threshold_sd)
    cells: dict[tuple[str, str], list[float]] = defaultdict(list)
    per_speaker: dict[tuple[str, str], dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row, k in zip(vfd, keep):
        if k:
            cells[(row.group, row.phoneme)].append(float(row.log_vfd))
            per_speaker[(row.phoneme, row.group)][row.speaker_id].append(float(row.log_vfd))
    for group, phoneme in sorted(cells):
        descriptives.append(_describe(f"log_vfd/{group}/{phoneme}", cells[(group, phoneme)]))

    vfd_family = []
    phonemes = [p for p in VOWELS if any(r.phoneme == p for r in vfd)]
    for ph in phonemes:
        by_group = {g: {s: float(np.mean(v)) for s, v in per_speaker[(ph, g)].items()}
                    for g in ("typical", "pre_surgery", "post_surgery") if (ph, g) in per_speaker}
        for label, g1, g2, paired in CONTRASTS:
            r = _contrast("log_vfd", ph, label, by_group, g1, g2, paired, gaps)
            if r is not None:
                vfd_family.append(r)
    _adjust(vfd_family)
    results.extend(vfd_family)
    return AnalysisResult(results, descriptives, report, gaps, vai_report)
