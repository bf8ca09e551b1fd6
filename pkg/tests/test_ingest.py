import json
import struct
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vowelmetrics.ingest import (
    AudioClip,
    IngestError,
    SegmentInterval,
    SessionManifest,
    build_corpus,
    canonical_phoneme,
    encode_pcm16,
    load_manifests,
    read_segmentation,
    read_wav,
    write_segmentation_csv,
    write_wav,
)


def wav_bytes(samples, rate=22050, channels=1, fmt=1, bits=16, data_size=None):
    payload = struct.pack(f"<{len(samples)}h", *samples) if bits == 16 else \
        struct.pack(f"<{len(samples)}f", *samples)
    size = len(payload) if data_size is None else data_size
    block = channels * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, fmt, channels, rate, rate * block, block, bits)
    return header + b"data" + struct.pack("<I", size) + payload


def test_hand_encoded_pcm16(tmp_path):
    p = tmp_path / "a.wav"
    data = wav_bytes([0, 16384, -16384, 32767])
    assert len(data) == 44 + 8
    p.write_bytes(data)
    clip = read_wav(p)
    assert clip.sample_rate == 22050
    assert clip.samples.tolist() == [0.0, 0.5, -0.5, 32767 / 32768]


def test_float32_wav(tmp_path):
    p = tmp_path / "f.wav"
    p.write_bytes(wav_bytes([0.25, -1.0, 0.0], fmt=3, bits=32))
    assert read_wav(p).samples.tolist() == [0.25, -1.0, 0.0]


@pytest.mark.parametrize("data, message", [
    (wav_bytes([]), "empty audio"),
    (wav_bytes([1, 2, 3, 4], channels=2), "mono required"),
    (wav_bytes([1, 2], data_size=40), "truncated data chunk"),
    (b"RIFX" + b"\0" * 40, "malformed header"),
    (wav_bytes([1, 2], fmt=2), "unsupported codec"),
])
def test_wav_errors(tmp_path, data, message):
    p = tmp_path / "bad.wav"
    p.write_bytes(data)
    with pytest.raises(IngestError, match=message):
        read_wav(p)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-32768, 32767), min_size=1, max_size=200))
def test_pcm16_reencode_is_bit_identical(tmp_path_factory, ints):
    d = tmp_path_factory.mktemp("rt")
    src = d / "src.wav"
    src.write_bytes(wav_bytes(ints))
    clip = read_wav(src)
    assert encode_pcm16(clip.samples).tolist() == ints
    out = d / "out.wav"
    write_wav(out, clip)
    assert out.read_bytes()[44:] == src.read_bytes()[44:]


def test_audio_clip_invariants():
    with pytest.raises(IngestError):
        AudioClip(np.array([0.5, 1.5]), 22050)
    with pytest.raises(IngestError):
        AudioClip(np.array([np.nan]), 22050)
    with pytest.raises(IngestError):
        AudioClip(np.zeros(3), 0)
    assert AudioClip(np.zeros(22050), 22050).duration == 1.0


@pytest.mark.parametrize("label, expected", [
    ("e:", "e:"), ("e\u02d0", "e:"), ("e\u02d1", "e:"), ("ɛ", "E"), ("aː", "a:"),
    ("u", "u"), ("i", "i"), ("x", None), ("y", None), ("ə", None),
])
def test_canonical_phoneme(label, expected):
    assert canonical_phoneme(label) == expected


def test_csv_row(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("start_s,end_s,phoneme,word,stressed\n0.10,0.25,i,fiets,1\n", encoding="utf-8")
    (iv,) = read_segmentation(p)
    assert iv.phoneme == "i" and iv.word == "fiets" and iv.stressed
    assert iv.duration == pytest.approx(0.15)


def test_csv_drops_unstressed_and_other_phones(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("start_s,end_s,phoneme,word,stressed\n"
                 "0.5,0.6,a:,maan,1\n0.1,0.2,i,fiets,0\n0.3,0.4,s,fiets,1\n", encoding="utf-8")
    diag = Counter()
    out = read_segmentation(p, diagnostics=diag)
    assert [iv.phoneme for iv in out] == ["a:"]
    assert diag["dropped_intervals"] == 2


def test_csv_inverted_interval(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("start_s,end_s,phoneme,word,stressed\n0.30,0.25,i,fiets,1\n", encoding="utf-8")
    with pytest.raises(IngestError, match="inverted interval"):
        read_segmentation(p)


def test_csv_overlap(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("start_s,end_s,phoneme,word,stressed\n0.1,0.3,i,a,1\n0.2,0.4,u,b,1\n",
                 encoding="utf-8")
    with pytest.raises(IngestError, match="overlapping"):
        read_segmentation(p)


def test_csv_header_must_match(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("begin,end,label\n0.1,0.2,i\n", encoding="utf-8")
    with pytest.raises(IngestError):
        read_segmentation(p)


TEXTGRID = '''File type = "ooTextFile"
Object class = "TextGrid"

xmin = 0
xmax = 1.0
tiers? <exists>
size = 2
item []:
    item [1]:
        class = "IntervalTier"
        name = "phoneme"
        xmin = 0
        xmax = 1.0
        intervals: size = 3
        intervals [1]:
            xmin = 0
            xmax = 0.3
            text = "s"
        intervals [2]:
            xmin = 0.3
            xmax = 0.6
            text = "'e:"
        intervals [3]:
            xmin = 0.6
            xmax = 1.0
            text = "a:"
    item [2]:
        class = "IntervalTier"
        name = "word"
        xmin = 0
        xmax = 1.0
        intervals: size = 1
        intervals [1]:
            xmin = 0
            xmax = 1.0
            text = "zee"
'''


@pytest.mark.parametrize("encoding", ["utf-8", "utf-16"])
def test_textgrid_one_stressed_token(tmp_path, encoding):
    p = tmp_path / "s.TextGrid"
    p.write_bytes(TEXTGRID.encode(encoding))
    out = read_segmentation(p, "textgrid")
    assert len(out) == 1
    assert out[0].phoneme == "e:" and (out[0].start_s, out[0].end_s) == (0.3, 0.6)


def test_textgrid_missing_tier(tmp_path):
    p = tmp_path / "s.TextGrid"
    p.write_text(TEXTGRID, encoding="utf-8")
    with pytest.raises(IngestError, match="no tier"):
        read_segmentation(p, "textgrid", tier="phones")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0.001, 0.05), st.floats(0.01, 0.2),
                          st.sampled_from(["i", "e:", "E", "a:", "o:", "u", "s"]), st.booleans()),
                min_size=1, max_size=25), st.randoms())
def test_parsed_intervals_sorted_and_disjoint(tmp_path_factory, spec, rnd):
    t, rows = 0.0, []
    for gap, dur, ph, stressed in spec:
        rows.append(SegmentInterval(round(t + gap, 6), round(t + gap + dur, 6), ph, "w", stressed))
        t = rows[-1].end_s
    rnd.shuffle(rows)
    p = tmp_path_factory.mktemp("seg") / "s.csv"
    write_segmentation_csv(p, rows)
    out = read_segmentation(p)
    assert len(out) == sum(1 for _, _, ph, s in spec if s and ph != "s")
    for a, b in zip(out, out[1:]):
        assert a.end_s <= b.start_s


def _session(tmp_path, name, counts, speaker="S1", group="typical"):
    rate, t, rows = 22050, 0.05, []
    for ph, n in counts.items():
        for _ in range(n):
            rows.append(SegmentInterval(t, t + 0.1, ph, "w", True))
            t += 0.15
    write_wav(tmp_path / f"{name}.wav", AudioClip(np.zeros(int((t + 0.05) * rate)), rate))
    write_segmentation_csv(tmp_path / f"{name}.csv", rows)
    doc = {"speaker_id": speaker, "group": group,
           "entries": [{"audio": f"{name}.wav", "segmentation": f"{name}.csv"}]}
    (tmp_path / f"{name}.json").write_text(json.dumps(doc), encoding="utf-8")
    return tmp_path / f"{name}.json"


def test_build_corpus_counts_and_warnings(tmp_path):
    m = _session(tmp_path, "s1", {v: 2 for v in ("i", "e:", "E", "a:", "o:", "u")})
    corpus = build_corpus(load_manifests(m))
    assert len(corpus.tokens) == 12
    assert len(corpus.warnings) == 6
    ids = [t.token_id for t in corpus.tokens]
    assert len(set(ids)) == 12 and ids[0] == "S1-typical-0000"


def test_build_corpus_duplicate_session(tmp_path):
    a = _session(tmp_path, "a", {"i": 1})
    b = _session(tmp_path, "b", {"u": 1})
    with pytest.raises(IngestError, match="duplicate"):
        build_corpus(load_manifests(a) + load_manifests(b))


def test_build_corpus_dangling_reference(tmp_path):
    m = _session(tmp_path, "a", {"i": 1})
    (tmp_path / "a.wav").unlink()
    with pytest.raises(IngestError, match="a.wav"):
        build_corpus(load_manifests(m))


def test_interval_outside_clip(tmp_path):
    m = _session(tmp_path, "a", {"i": 2})
    write_wav(tmp_path / "a.wav", AudioClip(np.zeros(100), 22050))
    with pytest.raises(IngestError, match="outside clip"):
        build_corpus(load_manifests(m))


def test_manifest_validation():
    with pytest.raises(IngestError):
        SessionManifest("", "typical", [])
    with pytest.raises(IngestError):
        SessionManifest("x", "control", [])
    with pytest.raises(IngestError):
        SessionManifest("x", "typical", [], age_years=-1)


def test_generated_corpus_scale(small_corpus):
    corpus = build_corpus(load_manifests(small_corpus), min_tokens=4)
    assert len(corpus.sessions) == 9
    assert len(corpus.tokens) == 9 * 6 * 4
    assert corpus.warnings == []
