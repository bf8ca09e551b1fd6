"""Source-filter vowel synthesis and synthetic corpus generation.

An impulse train at f0, given the -6 dB/octave slope of voiced speech by
a one-pole lowpass, drives a cascade of two-pole resonators, one per
formant. The synthesizer is the ground truth for formant-recovery tests
and the generator of desk-scale corpora for end-to-end runs.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.signal import lfilter

from .ingest import (
    GROUPS,
    VOWELS,
    AudioClip,
    SegmentInterval,
    SessionManifest,
    manifest_to_json,
    write_segmentation_csv,
    write_wav,
)

# Adult male Dutch monophthong targets (F1, F2) in Hz.
VOWEL_TARGETS = {
    "i": (290.0, 2200.0),
    "e:": (410.0, 2000.0),
    "E": (570.0, 1720.0),
    "a:": (780.0, 1300.0),
    "o:": (470.0, 900.0),
    "u": (330.0, 800.0),
}

# Classic cascade-synthesizer defaults for F1..F5.
BANDWIDTHS_HZ = (60.0, 90.0, 150.0, 200.0, 200.0)
HIGHER_FORMANTS_HZ = (2700.0, 3500.0, 4500.0)

DEMO_WORDS = {
    "i": "fiets",
    "e:": "been",
    "E": "bed",
    "a:": "maan",
    "o:": "boot",
    "u": "boek",
}


def vowel_formants(f1: float, f2: float, scale: float = 1.0) -> list[tuple[float, float]]:
    """Five-formant set for a vowel with the given F1/F2.

    F3 is kept at least 400 Hz above F2 so front vowels stay well-formed;
    ``scale`` multiplies F3..F5 (vocal-tract length).
    """
    f3, f4, f5 = HIGHER_FORMANTS_HZ
    freqs = (f1, f2, max(f3 * scale, f2 + 400.0), f4 * scale, f5 * scale)
    return list(zip(freqs, BANDWIDTHS_HZ))


@dataclass(frozen=True)
class VowelSpec:
    f0_hz: float
    formants: Sequence[tuple[float, float]]
    duration_s: float = 0.25
    sample_rate_hz: int = 22050
    amplitude: float = 0.8
    seed: int = 0
    jitter: float = 0.01
    noise_db: float | None = -60.0
    tilt_corner_hz: float | None = 50.0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if self.f0_hz <= 0:
            raise ValueError("f0 must be positive")
        if not 0 < self.amplitude <= 1:
            raise ValueError("amplitude must be in (0, 1]")
        if len(self.formants) < 2:
            raise ValueError("at least two formants required")
        freqs = [f for f, _ in self.formants]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ValueError("formant frequencies must be ascending")
        nyquist = self.sample_rate_hz / 2
        for f, bw in self.formants:
            if not 0 < f < nyquist:
                raise ValueError(f"formant {f} Hz outside (0, {nyquist}) Hz")
            if bw <= 0:
                raise ValueError("bandwidths must be positive")


def resonator(x: np.ndarray, freq: float, bandwidth: float, fs: float) -> np.ndarray:
    """Two-pole resonator with unity gain at DC."""
    t = 1.0 / fs
    c = -np.exp(-2 * np.pi * bandwidth * t)
    b = 2 * np.exp(-np.pi * bandwidth * t) * np.cos(2 * np.pi * freq * t)
    a = 1.0 - b - c
    return lfilter([a], [1.0, -b, -c], x)


def synthesize_vowel(spec: VowelSpec) -> AudioClip:
    fs = spec.sample_rate_hz
    n = int(round(spec.duration_s * fs))
    if n < 1:
        raise ValueError("duration shorter than one sample")
    rng = np.random.default_rng(spec.seed)

    source = np.zeros(n)
    period = fs / spec.f0_hz
    t = rng.uniform(0, period)
    while t < n:
        source[int(t)] = 1.0
        t += period * (1.0 + spec.jitter * rng.standard_normal())
    if spec.noise_db is not None:
        source += 10 ** (spec.noise_db / 20) * rng.standard_normal(n)

    y = source
    if spec.tilt_corner_hz is not None:
        # -6 dB/octave above the corner, the net glottal-plus-radiation slope of voiced speech
        y = lfilter([1.0], [1.0, -np.exp(-2 * np.pi * spec.tilt_corner_hz / fs)], y)
    for freq, bw in spec.formants:
        y = resonator(y, freq, bw, fs)
    peak = np.max(np.abs(y))
    if peak > 0:
        y = y * (spec.amplitude / peak)
    return AudioClip(np.clip(y, -spec.amplitude, spec.amplitude), fs)


# --------------------------------------------------------------- corpora


@dataclass(frozen=True)
class PhonemeTarget:
    f1_hz: float
    f2_hz: float
    f1_sd: float = 0.0
    f2_sd: float = 0.0

    def __post_init__(self):
        if self.f1_sd < 0 or self.f2_sd < 0:
            raise ValueError("dispersions must be >= 0")


def default_targets(f1_sd: float = 25.0, f2_sd: float = 70.0) -> dict[str, PhonemeTarget]:
    return {v: PhonemeTarget(f1, f2, f1_sd, f2_sd) for v, (f1, f2) in VOWEL_TARGETS.items()}


@dataclass
class CorpusRecipe:
    """What a synthetic corpus looks like.

    ``groups`` maps group name to per-phoneme targets. Patients appear in
    both ``pre_surgery`` and ``post_surgery`` under the same speaker ids;
    typical speakers are a separate set. ``speaker_scale_sd`` scales every
    formant of a speaker by a common factor (vocal-tract length) and
    ``speaker_shift_sd`` shifts each speaker's vowel means independently.
    """

    groups: dict[str, dict[str, PhonemeTarget]]
    tokens_per_phoneme: int = 12
    n_speakers: int = 11
    seed: int = 0
    speaker_scale_sd: float = 0.05
    speaker_shift_sd: float = 0.0
    f0_range_hz: tuple[float, float] = (95.0, 150.0)
    token_duration_s: tuple[float, float] = (0.12, 0.22)
    gap_s: float = 0.08

    def __post_init__(self):
        if self.tokens_per_phoneme < 1:
            raise ValueError("tokens_per_phoneme must be >= 1")
        if self.n_speakers < 1:
            raise ValueError("n_speakers must be >= 1")
        for g, targets in self.groups.items():
            if g not in GROUPS:
                raise ValueError(f"unknown group {g!r}")
            unknown = set(targets) - set(VOWELS)
            if unknown:
                raise ValueError(f"unknown phonemes {sorted(unknown)}")

    @classmethod
    def null(cls, **kwargs) -> "CorpusRecipe":
        """Three groups drawn from identical targets."""
        targets = default_targets()
        return cls(groups={g: dict(targets) for g in GROUPS}, **kwargs)

    def with_group(self, group: str, targets: Mapping[str, PhonemeTarget]) -> "CorpusRecipe":
        out = copy.copy(self)
        out.groups = {**self.groups, group: dict(targets)}
        return out


def centralize(targets: Mapping[str, PhonemeTarget], fraction: float,
               phonemes: Sequence[str] = ("i", "a:", "u")) -> dict[str, PhonemeTarget]:
    """Move the given phonemes' means toward the centroid of all means."""
    c1 = float(np.mean([t.f1_hz for t in targets.values()]))
    c2 = float(np.mean([t.f2_hz for t in targets.values()]))
    out = dict(targets)
    for p in phonemes:
        t = targets[p]
        out[p] = PhonemeTarget(t.f1_hz + fraction * (c1 - t.f1_hz),
                               t.f2_hz + fraction * (c2 - t.f2_hz), t.f1_sd, t.f2_sd)
    return out


def inflate(targets: Mapping[str, PhonemeTarget], factor: float,
            phonemes: Sequence[str] = ("i",)) -> dict[str, PhonemeTarget]:
    out = dict(targets)
    for p in phonemes:
        t = targets[p]
        out[p] = PhonemeTarget(t.f1_hz, t.f2_hz, t.f1_sd * factor, t.f2_sd * factor)
    return out


def effect_recipe(seed: int = 0, *, dispersion_factor: float = 2.0,
                  centralization: float = 0.05, **kwargs) -> CorpusRecipe:
    """Recipe whose post-surgery group has inflated /i/ scatter and centralized corners."""
    base = default_targets()
    post = centralize(inflate(base, dispersion_factor), centralization)
    return CorpusRecipe(
        groups={"typical": dict(base), "pre_surgery": dict(base), "post_surgery": post},
        seed=seed, **kwargs,
    )


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float) -> float:
    if sd == 0:
        return mean
    while True:
        z = rng.standard_normal()
        if abs(z) <= 3.0:
            return mean + sd * z


def _speaker_ids(group: str, n: int) -> list[str]:
    prefix = "TS" if group == "typical" else "OC"
    return [f"{prefix}{i + 1:02d}" for i in range(n)]


@dataclass(frozen=True)
class TokenPlan:
    phoneme: str
    f1_hz: float
    f2_hz: float
    formants: tuple
    f0_hz: float
    duration_s: float
    seed: int


@dataclass(frozen=True)
class SessionPlan:
    speaker_id: str
    group: str
    tokens: tuple[TokenPlan, ...]


def plan_corpus(recipe: CorpusRecipe) -> list[SessionPlan]:
    """Draw every token's target formants, f0, duration and noise seed.

    Pure function of the recipe. Token (F1, F2) come from a Gaussian around
    the speaker-scaled vowel target, truncated at +-3 SD and floored at 50 Hz.
    """
    rng = np.random.default_rng(recipe.seed)

    # speaker traits are shared between a patient's pre and post sessions
    traits = {}
    for prefix in ("OC", "TS"):
        for i in range(recipe.n_speakers):
            sid = f"{prefix}{i + 1:02d}"
            scale = max(0.7, 1.0 + recipe.speaker_scale_sd * rng.standard_normal())
            f0 = rng.uniform(*recipe.f0_range_hz)
            shifts = {v: (1.0 + recipe.speaker_shift_sd * rng.standard_normal(),
                          1.0 + recipe.speaker_shift_sd * rng.standard_normal())
                      for v in VOWELS}
            traits[sid] = (scale, f0, shifts)

    plans = []
    for group in GROUPS:
        if group not in recipe.groups:
            continue
        targets = recipe.groups[group]
        for sid in _speaker_ids(group, recipe.n_speakers):
            scale, f0, shifts = traits[sid]
            order = [v for v in VOWELS if v in targets for _ in range(recipe.tokens_per_phoneme)]
            order = [order[i] for i in rng.permutation(len(order))]
            tokens = []
            for v in order:
                tgt = targets[v]
                s1, s2 = shifts[v]
                f1 = max(50.0, _truncated_normal(rng, tgt.f1_hz * s1, tgt.f1_sd)) * scale
                f2 = max(50.0, _truncated_normal(rng, tgt.f2_hz * s2, tgt.f2_sd)) * scale
                f2 = max(f2, f1 + 100.0)
                dur = rng.uniform(*recipe.token_duration_s)
                tokens.append(TokenPlan(
                    phoneme=v, f1_hz=f1, f2_hz=f2, formants=tuple(vowel_formants(f1, f2, scale)),
                    f0_hz=f0 * (1.0 + 0.03 * rng.standard_normal()), duration_s=dur,
                    seed=int(rng.integers(2**31)),
                ))
            plans.append(SessionPlan(sid, group, tuple(tokens)))
    return plans


def generate_corpus(recipe: CorpusRecipe, out_dir, *, sample_rate: int = 22050) -> list[Path]:
    """Write one WAV, one CSV segmentation and one manifest per speaker-session.

    Returns the manifest paths in a stable order. Output is a pure function
    of the recipe, including the seed.
    """
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "manifests").mkdir(parents=True, exist_ok=True)
    gap = np.zeros(int(recipe.gap_s * sample_rate))

    paths = []
    for plan in plan_corpus(recipe):
        pieces = [gap]
        t = gap.size / sample_rate
        intervals = []
        for tok in plan.tokens:
            spec = VowelSpec(f0_hz=tok.f0_hz, formants=list(tok.formants), duration_s=tok.duration_s,
                             sample_rate_hz=sample_rate, amplitude=0.5, seed=tok.seed)
            clip = synthesize_vowel(spec)
            intervals.append(SegmentInterval(t, t + clip.duration, tok.phoneme,
                                             DEMO_WORDS[tok.phoneme], True))
            pieces += [clip.samples, gap]
            t += clip.duration + gap.size / sample_rate

        name = f"{plan.speaker_id}_{plan.group}"
        wav = out_dir / "audio" / f"{name}.wav"
        seg = out_dir / "audio" / f"{name}.csv"
        write_wav(wav, AudioClip(np.concatenate(pieces), sample_rate))
        write_segmentation_csv(seg, intervals)
        manifest = SessionManifest(
            speaker_id=plan.speaker_id, group=plan.group, entries=[(wav, seg)],
            sex="M", age_years=None, metadata={"synthetic": True, "seed": recipe.seed},
        )
        mpath = out_dir / "manifests" / f"{name}.json"
        doc = manifest_to_json(manifest)
        doc["entries"] = [{"audio": f"../audio/{name}.wav", "segmentation": f"../audio/{name}.csv"}]
        mpath.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        paths.append(mpath)
    return paths
