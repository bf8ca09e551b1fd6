import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import curve_fit

from vowelmetrics.ingest import build_corpus, load_manifests, read_wav
from vowelmetrics.synth import (
    CorpusRecipe,
    PhonemeTarget,
    VowelSpec,
    centralize,
    default_targets,
    effect_recipe,
    generate_corpus,
    inflate,
    plan_corpus,
    synthesize_vowel,
    vowel_formants,
)


def _lorentz(f, peak, a, c, s):
    return np.log(a * (f - peak) ** 2 + c) + s * (f - peak)


def envelope_peaks(clip, f0, near):
    """Spectral-envelope peaks from harmonic amplitudes.

    Harmonic magnitudes k*f0 are read off the windowed DFT, the 1/f source
    slope is removed, and each peak is located by fitting a single
    resonance (1/|H|^2 quadratic) plus a smooth slope to five harmonics.
    """
    x = clip.samples * np.hanning(clip.samples.size)
    t = np.arange(x.size) / clip.sample_rate
    ks = np.arange(1, int(3000 / f0))
    amp = np.array([abs(np.sum(x * np.exp(-2j * np.pi * k * f0 * t))) for k in ks]) * ks
    out = []
    for target in near:
        lo, hi = np.searchsorted(ks * f0, [target - 2 * f0, target + 2 * f0])
        j = lo + int(np.argmax(amp[lo:hi]))
        f = ks[j - 2:j + 3] * f0
        y = -2 * np.log(amp[j - 2:j + 3])
        p, _ = curve_fit(_lorentz, f, y - y.min(), p0=[ks[j] * f0, 1e-4, 1.0, 0.0], maxfev=20000)
        out.append(p[0])
    return out


@pytest.mark.parametrize("seed", range(3))
def test_envelope_peaks_at_formants(seed):
    clip = synthesize_vowel(VowelSpec(f0_hz=120, formants=[(500, 60), (1500, 90)],
                                      duration_s=0.3, sample_rate_hz=22050, seed=seed))
    p1, p2 = envelope_peaks(clip, 120, [500, 1500])
    assert abs(p1 - 500) <= 20 and abs(p2 - 1500) <= 20


def test_deterministic():
    spec = VowelSpec(f0_hz=130, formants=vowel_formants(400, 1900), seed=11)
    assert synthesize_vowel(spec).samples.tobytes() == synthesize_vowel(spec).samples.tobytes()


def test_seed_changes_output():
    a = synthesize_vowel(VowelSpec(f0_hz=130, formants=vowel_formants(400, 1900), seed=1))
    b = synthesize_vowel(VowelSpec(f0_hz=130, formants=vowel_formants(400, 1900), seed=2))
    assert not np.array_equal(a.samples, b.samples)


@pytest.mark.parametrize("kwargs", [
    dict(duration_s=0.0),
    dict(f0_hz=0.0),
    dict(formants=[(500, 60)]),
    dict(formants=[(1500, 90), (500, 60)]),
    dict(formants=[(500, 60), (11100, 90)]),
    dict(amplitude=1.5),
])
def test_spec_validation(kwargs):
    base = dict(f0_hz=120, formants=[(500, 60), (1500, 90)], duration_s=0.2)
    with pytest.raises(ValueError):
        VowelSpec(**{**base, **kwargs})


@settings(max_examples=30, deadline=None)
@given(st.floats(60, 300), st.floats(0.05, 1.0), st.integers(0, 1000),
       st.floats(250, 900), st.floats(1000, 2400))
def test_peak_bounded_by_amplitude(f0, amp, seed, f1, f2):
    clip = synthesize_vowel(VowelSpec(f0_hz=f0, formants=vowel_formants(f1, f2), amplitude=amp,
                                      duration_s=0.05, seed=seed))
    assert np.max(np.abs(clip.samples)) <= amp
    assert np.max(np.abs(clip.samples)) == pytest.approx(amp)


def test_vowel_formants_ascending():
    fs = vowel_formants(330, 800)
    freqs = [f for f, _ in fs]
    assert freqs == sorted(freqs) and len(fs) == 5


def test_one_speaker_counting(tmp_path):
    recipe = CorpusRecipe(groups={"typical": default_targets()}, n_speakers=1, tokens_per_phoneme=12)
    paths = generate_corpus(recipe, tmp_path)
    assert len(paths) == 1
    assert len(list((tmp_path / "audio").glob("*.wav"))) == 1
    with open(tmp_path / "audio" / "TS01_typical.csv", newline="") as fh:
        assert sum(1 for _ in csv.DictReader(fh)) == 72


def test_zero_dispersion_shares_targets():
    targets = {v: PhonemeTarget(t.f1_hz, t.f2_hz, 0.0, 0.0) for v, t in default_targets().items()}
    plans = plan_corpus(CorpusRecipe(groups={"typical": targets}, n_speakers=2, tokens_per_phoneme=5))
    for plan in plans:
        for v in targets:
            draws = {(t.f1_hz, t.f2_hz) for t in plan.tokens if t.phoneme == v}
            assert len(draws) == 1


def test_draws_truncated_at_three_sd():
    recipe = CorpusRecipe(groups={"typical": default_targets(40, 100)}, n_speakers=4,
                          tokens_per_phoneme=30, speaker_scale_sd=0.0, seed=3)
    for plan in plan_corpus(recipe):
        for t in plan.tokens:
            tgt = default_targets(40, 100)[t.phoneme]
            assert abs(t.f1_hz - tgt.f1_hz) <= 3 * 40 + 1e-9
            assert t.f2_hz >= t.f1_hz + 100


def test_inflated_group_has_wider_i_scatter():
    plans = plan_corpus(effect_recipe(seed=0, n_speakers=4, tokens_per_phoneme=40))
    sd = {}
    for g in ("pre_surgery", "post_surgery"):
        # within-speaker scatter; speaker scaling would swamp a pooled SD
        sd[g] = np.mean([np.std([t.f2_hz for t in p.tokens if t.phoneme == "i"])
                         for p in plans if p.group == g])
    assert sd["post_surgery"] > 1.5 * sd["pre_surgery"]


def test_centralize_moves_toward_centroid():
    base = default_targets()
    moved = centralize(base, 0.5)
    c2 = np.mean([t.f2_hz for t in base.values()])
    assert abs(moved["i"].f2_hz - c2) == pytest.approx(0.5 * abs(base["i"].f2_hz - c2))
    assert moved["E"] == base["E"]
    assert inflate(base, 2.0)["i"].f1_sd == 2 * base["i"].f1_sd


def test_recipe_validation():
    with pytest.raises(ValueError):
        CorpusRecipe(groups={"typical": default_targets()}, tokens_per_phoneme=0)
    with pytest.raises(ValueError):
        CorpusRecipe(groups={"control": default_targets()})
    with pytest.raises(ValueError):
        PhonemeTarget(300, 2000, -1.0, 0.0)


def test_corpus_byte_identical(tmp_path):
    recipe = CorpusRecipe(groups={"typical": default_targets()}, n_speakers=1, tokens_per_phoneme=2, seed=5)
    generate_corpus(recipe, tmp_path / "a")
    generate_corpus(recipe, tmp_path / "b")
    for sub in ("audio/TS01_typical.wav", "audio/TS01_typical.csv", "manifests/TS01_typical.json"):
        assert (tmp_path / "a" / sub).read_bytes() == (tmp_path / "b" / sub).read_bytes()


def test_generated_corpus_ingests_cleanly(small_corpus):
    corpus = build_corpus(load_manifests(small_corpus), min_tokens=4)
    assert corpus.warnings == [] and corpus.dropped_intervals == 0
    clip = read_wav(corpus.sessions[0].manifest.entries[0][0])
    assert clip.sample_rate == 22050
