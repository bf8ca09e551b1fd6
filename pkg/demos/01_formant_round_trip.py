"""Synthesize a vowel with known resonances and measure it back.

Run:  python demos/01_formant_round_trip.py

We build /a:/ and /i/ tokens from an impulse train and a resonator cascade,
then run the Burg LPC tracker at each candidate ceiling. Watch how F1 and
F2 stay put across ceilings for a clean token, and how a high-pitched /i/
drifts: with f0 = 220 Hz the harmonics are too sparse to pin F1 near 290 Hz.
"""

from vowelmetrics.formants import ExtractionConfig, measure_token
from vowelmetrics.ingest import SegmentInterval
from vowelmetrics.synth import VOWEL_TARGETS, VowelSpec, synthesize_vowel, vowel_formants

config = ExtractionConfig()

for vowel, f0 in (("a:", 110.0), ("i", 110.0), ("i", 220.0)):
    f1, f2 = VOWEL_TARGETS[vowel]
    clip = synthesize_vowel(VowelSpec(f0_hz=f0, formants=vowel_formants(f1, f2), duration_s=0.25))
    token = SegmentInterval(0.0, clip.duration, vowel)
    print(f"/{vowel}/ at f0 {f0:g} Hz, true F1 {f1:g}  F2 {f2:g}")
    for ceiling in config.ceilings_hz:
        m = measure_token(clip, token, config, ceiling)
        print(f"   ceiling {ceiling:6g}:  F1 {m.f1:7.1f} ({m.f1 / f1 - 1:+.1%})"
              f"   F2 {m.f2:7.1f} ({m.f2 / f2 - 1:+.1%})   frames {m.n_frames}")
    print()

# The pipeline does not pick a ceiling per token. It picks, per speaker and
# vowel, the ceiling whose tokens agree best with one another (see demo 02).
