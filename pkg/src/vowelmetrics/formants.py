"""Burg-LPC formant estimation with per-vowel formant-ceiling selection.

Each vowel token is analysed over the central quarter of its interval at
every ceiling in the sweep. For a ceiling ``C`` the clip is resampled to
``2*C`` Hz and pre-emphasized, Gaussian-windowed frames are fitted with a
Burg autoregressive model, and the model's resonances are read off the
roots of the prediction polynomial. The ceiling whose token measurements
vary least, per speaker-session and vowel, supplies the official values.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.signal import resample_poly

from .ingest import AudioClip, Session, SegmentInterval

log = logging.getLogger(__name__)

MAD_SCALE = 1.4826


class SilentFrameError(ValueError):
    """The analysis frame carries no energy."""


class TokenDropped(ValueError):
    """No usable frames for a token at a given ceiling."""


@dataclass(frozen=True)
class ExtractionConfig:
    time_step_s: float = 0.01
    window_s: float = 0.025
    ceilings_hz: tuple[float, ...] = (4000.0, 4500.0, 5000.0, 5500.0, 6000.0)
    n_formants_tracked: int = 5
    lpc_order: int = 10
    pre_emphasis_from_hz: float = 50.0
    middle_fraction: float = 0.25
    max_bandwidth_hz: float = 700.0
    edge_margin_hz: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "ceilings_hz", tuple(float(c) for c in self.ceilings_hz))
        if not self.window_s > self.time_step_s > 0:
            raise ValueError("need window_s > time_step_s > 0")
        if not self.ceilings_hz:
            raise ValueError("at least one ceiling required")
        if list(self.ceilings_hz) != sorted(set(self.ceilings_hz)):
            raise ValueError("ceilings must be strictly ascending")
        if self.ceilings_hz[0] <= 2 * self.edge_margin_hz:
            raise ValueError("ceiling too low")
        if self.lpc_order != 2 * self.n_formants_tracked:
            raise ValueError("lpc_order must equal 2 * n_formants_tracked")
        if not 0 < self.middle_fraction <= 1:
            raise ValueError("middle_fraction must be in (0, 1]")

    def check_sample_rate(self, sample_rate: float) -> None:
        if self.ceilings_hz[-1] >= sample_rate / 2:
            raise ValueError(
                f"ceiling {self.ceilings_hz[-1]:g} Hz not below Nyquist of {sample_rate} Hz audio"
            )


@dataclass(frozen=True)
class FrameFormants:
    frame_center_s: float
    formants: tuple[tuple[float, float], ...]


class TokenMeasure(NamedTuple):
    f1: float
    f2: float
    b1: float
    b2: float
    n_frames: int


@dataclass(frozen=True)
class FormantMeasurement:
    token_id: str
    speaker_id: str
    group: str
    phoneme: str
    word: str
    f1_hz: float
    f2_hz: float
    b1_hz: float
    b2_hz: float
    ceiling_hz: float
    n_frames: int
    flagged: bool = False


# ---------------------------------------------------------- preprocessing


def preprocess(clip: AudioClip, ceiling_hz: float, pre_emphasis_from_hz: float = 50.0) -> AudioClip:
    """Resample to ``2 * ceiling_hz`` and apply first-difference pre-emphasis.

    Resampling is polyphase with a Kaiser-windowed sinc lowpass
    (:func:`scipy.signal.resample_poly`, beta 5.0). The returned clip is
    not clipped to [-1, 1]; pre-emphasis can push a full-scale square wave
    slightly past it.
    """
    if ceiling_hz >= clip.sample_rate / 2:
        raise ValueError(
            f"ceiling {ceiling_hz:g} Hz must be below the source Nyquist {clip.sample_rate / 2:g} Hz"
        )
    fs_new = int(round(2 * ceiling_hz))
    ratio = Fraction(fs_new, clip.sample_rate)
    x = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    alpha = math.exp(-2 * math.pi * pre_emphasis_from_hz / fs_new)
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - alpha * x[:-1]
    return _PreparedClip(y, fs_new)


class _PreparedClip(AudioClip):
    """AudioClip variant without the [-1, 1] check, for resampled intermediates."""

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))


# ------------------------------------------------------------------- Burg


def _burg_batch(frames: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Burg recursion over a stack of frames.

    Returns ``(a, k, silent)`` where ``a[:, i]`` are the predictor
    coefficients a[1..order] of ``A(z) = 1 + sum a_i z^-i``, ``k`` the
    reflection coefficients and ``silent`` flags frames with no energy.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n_frames, n = frames.shape
    if order >= n:
        raise ValueError(f"order {order} must be below frame length {n}")
    silent = ~np.any(frames != 0.0, axis=1)
    f = frames.copy()
    b = frames.copy()
    a = np.zeros((n_frames, order + 1))
    a[:, 0] = 1.0
    k = np.zeros((n_frames, order))
    for m in range(1, order + 1):
        ff = f[:, m:]
        bb = b[:, m - 1 : -1]
        num = np.einsum("ij,ij->i", ff, bb)
        den = np.einsum("ij,ij->i", ff, ff) + np.einsum("ij,ij->i", bb, bb)
        km = np.zeros(n_frames)
        ok = den > 0
        km[ok] = -2.0 * num[ok] / den[ok]
        f_new = ff + km[:, None] * bb
        b_new = bb + km[:, None] * ff
        f[:, m:] = f_new
        b[:, m:] = b_new
        a[:, 1 : m + 1] = a[:, 1 : m + 1] + km[:, None] * a[:, m - 1 :: -1][:, : m]
        k[:, m - 1] = km
    return a[:, 1:], k, silent


def burg_lattice(frame: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Predictor and reflection coefficients of one frame (see :func:`burg_coefficients`)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise ValueError("frame must be one-dimensional")
    if order >= frame.size:
        raise ValueError(f"order {order} must be below frame length {frame.size}")
    a, k, silent = _burg_batch(frame[None, :], order)
    if silent[0]:
        raise SilentFrameError("silent frame")
    return a[0], k[0]


def burg_coefficients(frame: np.ndarray, order: int) -> np.ndarray:
    """Burg estimate of the LPC coefficients a[1..order].

    The convention is ``A(z) = 1 + a_1 z^-1 + ... + a_p z^-p``, so an AR
    process ``x[n] = 1.3 x[n-1] - 0.64 x[n-2] + e[n]`` yields
    ``a = [-1.3, 0.64]``. Raises :class:`SilentFrameError` on an all-zero
    frame.
    """
    return burg_lattice(frame, order)[0]


# ------------------------------------------------------------------ roots


def _lpc_roots_batch(a: np.ndarray, polish_steps: int = 2) -> np.ndarray:
    """Roots of z^p + a_1 z^(p-1) + ... + a_p for each row of ``a``."""
    a = np.atleast_2d(a)
    n, p = a.shape
    comp = np.zeros((n, p, p))
    comp[:, 0, :] = -a
    comp[:, np.arange(1, p), np.arange(p - 1)] = 1.0
    roots = np.linalg.eigvals(comp)
    coeffs = np.concatenate([np.ones((n, 1)), a], axis=1)
    for _ in range(polish_steps):
        val, der = _horner(coeffs, roots)
        step = np.where(np.abs(der) > 1e-300, val / np.where(der == 0, 1, der), 0)
        roots = roots - step
    return roots


def _horner(coeffs: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    val = np.ones_like(z)
    der = np.zeros_like(z)
    for j in range(1, coeffs.shape[1]):
        der = der * z + val
        val = val * z + coeffs[:, j : j + 1]
    return val, der


def polynomial_residual(coefficients: np.ndarray, roots: np.ndarray) -> np.ndarray:
    coeffs = np.concatenate([[1.0], np.asarray(coefficients, dtype=np.float64)])[None, :]
    return np.abs(_horner(coeffs, np.asarray(roots)[None, :])[0][0])


def _select_resonances(roots: np.ndarray, fs: float, ceiling_hz: float,
                       max_bandwidth_hz: float, edge_margin_hz: float) -> list[tuple[float, float]]:
    roots = roots[roots.imag > 0]
    freqs = np.angle(roots) * fs / (2 * np.pi)
    with np.errstate(divide="ignore"):
        bws = -np.log(np.abs(roots)) * fs / np.pi
    keep = (freqs > edge_margin_hz) & (freqs < ceiling_hz - edge_margin_hz) & (bws < max_bandwidth_hz)
    order = np.argsort(freqs[keep], kind="stable")
    return [(float(f), float(b)) for f, b in zip(freqs[keep][order], bws[keep][order])]


def roots_to_formants(coefficients, fs_hz: float, ceiling_hz: float, *,
                      max_bandwidth_hz: float = 700.0,
                      edge_margin_hz: float = 50.0) -> list[tuple[float, float]]:
    """Resonances (frequency, bandwidth) of an LPC polynomial, ascending.

    A root ``r e^{i theta}`` in the upper half plane maps to frequency
    ``theta fs / 2pi`` and bandwidth ``-ln(r) fs / pi``. Only roots with
    ``edge < F < ceiling - edge`` and ``B < max_bandwidth_hz`` qualify;
    the list is empty when none do.
    """
    a = np.asarray(coefficients, dtype=np.float64)
    if a.ndim != 1 or a.size == 0 or not np.all(np.isfinite(a)):
        raise ValueError("coefficients must be a nonempty finite vector")
    roots = _lpc_roots_batch(a[None, :])[0]
    return _select_resonances(roots, fs_hz, ceiling_hz, max_bandwidth_hz, edge_margin_hz)


# ----------------------------------------------------------------- frames


def frame_centers(start_s: float, end_s: float, time_step_s: float,
                  middle_fraction: float = 0.25) -> np.ndarray:
    """Frame centres on a ``time_step_s`` grid inside the central part of an interval.

    The grid holds as many centres as fit in the span, both ends inclusive,
    and is centred in it. A span shorter than one step yields the midpoint.
    """
    dur = end_s - start_s
    lo = start_s + 0.5 * (1 - middle_fraction) * dur
    hi = end_s - 0.5 * (1 - middle_fraction) * dur
    n = int(math.floor((hi - lo) / time_step_s + 1e-9)) + 1
    if hi < lo or n <= 1:
        return np.array([0.5 * (start_s + end_s)])
    offset = 0.5 * ((hi - lo) - (n - 1) * time_step_s)
    return lo + offset + time_step_s * np.arange(n)


def gaussian_window(n: int) -> np.ndarray:
    """Gaussian taper with sigma one sixth of the window, truncated at the ends."""
    x = np.arange(n) - (n - 1) / 2
    sigma = n / 6
    return np.exp(-0.5 * (x / sigma) ** 2)


def _cut_frames(x: np.ndarray, fs: float, centers: np.ndarray, window_s: float) -> np.ndarray:
    width = int(round(window_s * fs))
    half = width // 2
    starts = np.round(centers * fs).astype(int) - half
    padded = np.concatenate([np.zeros(width), x, np.zeros(width)])
    idx = starts[:, None] + np.arange(width)[None, :] + width
    return padded[idx] * gaussian_window(width)[None, :]


def _interval_of(token) -> SegmentInterval:
    return getattr(token, "interval", token)


def _frames_from_prepared(prepared: AudioClip, intervals: Sequence[SegmentInterval],
                          config: ExtractionConfig, ceiling_hz: float) -> list[list[FrameFormants]]:
    fs = prepared.sample_rate
    all_centers = []
    for iv in intervals:
        if iv.end_s - iv.start_s < 1.0 / fs:
            raise ValueError(f"token [{iv.start_s}, {iv.end_s}] shorter than one sample")
        all_centers.append(frame_centers(iv.start_s, iv.end_s, config.time_step_s,
                                         config.middle_fraction))
    if not all_centers:
        return []
    centers = np.concatenate(all_centers)
    frames = _cut_frames(prepared.samples, fs, centers, config.window_s)
    a, _, silent = _burg_batch(frames, config.lpc_order)
    roots = _lpc_roots_batch(a)

    out, pos = [], 0
    for c in all_centers:
        token_frames = []
        for j in range(pos, pos + c.size):
            if silent[j]:
                continue
            res = _select_resonances(roots[j], fs, ceiling_hz, config.max_bandwidth_hz,
                                     config.edge_margin_hz)
            token_frames.append(FrameFormants(float(centers[j]), tuple(res)))
        out.append(token_frames)
        pos += c.size
    return out


def extract_token_frames(clip: AudioClip, token, config: ExtractionConfig,
                         ceiling_hz: float) -> list[FrameFormants]:
    """Formants of every non-silent frame in the token's central span."""
    prepared = preprocess(clip, ceiling_hz, config.pre_emphasis_from_hz)
    return _frames_from_prepared(prepared, [_interval_of(token)], config, ceiling_hz)[0]


def summarize_frames(frames: Sequence[FrameFormants]) -> TokenMeasure:
    """Median F1/F2 (and bandwidths) over frames with at least two formants."""
    usable = [fr.formants for fr in frames if len(fr.formants) >= 2]
    if not usable:
        raise TokenDropped("no frame with two qualifying formants")
    arr = np.array([[f[0][0], f[1][0], f[0][1], f[1][1]] for f in usable])
    med = np.median(arr, axis=0)
    return TokenMeasure(float(med[0]), float(med[1]), float(med[2]), float(med[3]), len(usable))


def measure_token(clip: AudioClip, token, config: ExtractionConfig, ceiling_hz: float) -> TokenMeasure:
    return summarize_frames(extract_token_frames(clip, token, config, ceiling_hz))


# ------------------------------------------------------ ceiling selection


def variation_score(values) -> float:
    """Sum of squared coefficients of variation of F1 and F2 (sample SD)."""
    arr = np.asarray(values, dtype=np.float64)[:, :2]
    if arr.shape[0] < 2:
        return math.nan
    cv = arr.std(axis=0, ddof=1) / arr.mean(axis=0)
    return float(np.sum(cv**2))


def select_ceiling(per_ceiling: Mapping[float, Sequence]) -> float:
    """Pick the ceiling whose token measurements vary least.

    ``per_ceiling`` maps each ceiling to the (F1, F2, ...) rows of the
    tokens that survived at that ceiling. Ceilings with no tokens are out
    of contention. When every remaining ceiling has at least two tokens
    the lowest :func:`variation_score` wins; otherwise the ceiling with
    most tokens wins. Ties go to the lowest ceiling.
    """
    counts = {c: len(rows) for c, rows in per_ceiling.items() if len(rows) > 0}
    if not counts:
        raise ValueError("no ceiling produced a measurement")
    candidates = sorted(counts)
    if min(counts.values()) < 2:
        best = max(counts.values())
        candidates = [c for c in candidates if counts[c] == best]
        if best < 2:
            return candidates[0]
    scores = {c: variation_score(per_ceiling[c]) for c in candidates}
    return min(candidates, key=lambda c: (scores[c], c))


def flag_mistracks(measurements: Sequence[FormantMeasurement], k: float = 3.0) -> list[FormantMeasurement]:
    """Flag tokens whose F1 or F2 lies more than ``k`` robust SDs from the cell median.

    The robust SD is 1.4826 times the median absolute deviation. When the
    MAD is zero, any token more than 1 Hz from the median is flagged.
    Cells of fewer than three tokens are returned unflagged.
    """
    out = list(measurements)
    if len(out) < 3:
        return out
    flags = np.zeros(len(out), dtype=bool)
    for attr in ("f1_hz", "f2_hz"):
        v = np.array([getattr(m, attr) for m in out])
        med = np.median(v)
        dev = np.abs(v - med)
        mad = np.median(dev)
        limit = k * MAD_SCALE * mad if mad > 0 else 1.0
        flags |= dev > limit
    return [replace(m, flagged=bool(f)) for m, f in zip(out, flags)]


# -------------------------------------------------------------- sessions


@dataclass
class ExtractionDiagnostics:
    tokens_in: int = 0
    measured: int = 0
    dropped: int = 0
    flagged: int = 0
    ceilings: dict = field(default_factory=dict)
    dropped_ids: list[str] = field(default_factory=list)

    def merge(self, other: "ExtractionDiagnostics") -> None:
        self.tokens_in += other.tokens_in
        self.measured += other.measured
        self.dropped += other.dropped
        self.flagged += other.flagged
        self.ceilings.update(other.ceilings)
        self.dropped_ids.extend(other.dropped_ids)


def measure_session(session: Session, config: ExtractionConfig = ExtractionConfig()
                    ) -> tuple[list[FormantMeasurement], ExtractionDiagnostics]:
    """Measure every token of a session at every ceiling, select, and flag.

    Official measurements per vowel come from the selected ceiling; tokens
    without a measurement there are dropped. Returns measurements in token
    order, flagged ones included.
    """
    diag = ExtractionDiagnostics(tokens_in=len(session.tokens))
    by_ceiling: dict[float, dict[str, TokenMeasure]] = {c: {} for c in config.ceilings_hz}
    for clip_index, clip in enumerate(session.clips):
        config.check_sample_rate(clip.sample_rate)
        tokens = [t for t in session.tokens if t.clip_index == clip_index]
        if not tokens:
            continue
        for ceiling in config.ceilings_hz:
            prepared = preprocess(clip, ceiling, config.pre_emphasis_from_hz)
            frames = _frames_from_prepared(prepared, [t.interval for t in tokens], config, ceiling)
            for tok, fr in zip(tokens, frames):
                try:
                    by_ceiling[ceiling][tok.token_id] = summarize_frames(fr)
                except TokenDropped:
                    pass

    official: list[FormantMeasurement] = []
    phonemes = sorted({t.phoneme for t in session.tokens})
    for ph in phonemes:
        toks = [t for t in session.tokens if t.phoneme == ph]
        per_ceiling = {c: [by_ceiling[c][t.token_id] for t in toks if t.token_id in by_ceiling[c]]
                       for c in config.ceilings_hz}
        try:
            ceiling = select_ceiling(per_ceiling)
        except ValueError:
            diag.dropped += len(toks)
            diag.dropped_ids.extend(t.token_id for t in toks)
            continue
        diag.ceilings[(session.manifest.speaker_id, session.manifest.group, ph)] = ceiling
        cell = []
        for t in toks:
            m = by_ceiling[ceiling].get(t.token_id)
            if m is None:
                diag.dropped += 1
                diag.dropped_ids.append(t.token_id)
                continue
            cell.append(FormantMeasurement(
                token_id=t.token_id, speaker_id=t.speaker_id, group=t.group,
                phoneme=t.phoneme, word=t.word, f1_hz=m.f1, f2_hz=m.f2, b1_hz=m.b1,
                b2_hz=m.b2, ceiling_hz=ceiling, n_frames=m.n_frames,
            ))
        official.extend(flag_mistracks(cell))

    rank = {t.token_id: i for i, t in enumerate(session.tokens)}
    official.sort(key=lambda m: rank[m.token_id])
    diag.flagged = sum(m.flagged for m in official)
    diag.measured = len(official) - diag.flagged
    if diag.dropped_ids:
        log.info("%s/%s: dropped %d tokens", session.manifest.speaker_id,
                 session.manifest.group, diag.dropped)
    return official, diag
