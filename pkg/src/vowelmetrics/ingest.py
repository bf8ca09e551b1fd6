"""Audio, segmentation and manifest ingestion.

Reads mono PCM WAV files, CSV or TextGrid vowel segmentations and JSON
session manifests, and binds them into a :class:`Corpus` of
:class:`VowelToken` objects ready for formant extraction.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

VOWELS = ("i", "e:", "E", "a:", "o:", "u")
CORNER_VOWELS = ("i", "a:", "u")
GROUPS = ("typical", "pre_surgery", "post_surgery")
SEXES = ("F", "M", "unspecified")
MIN_TOKENS_PER_VOWEL = 12

# IPA and X-SAMPA spellings seen across annotation tools.
PHONEME_ALIASES = {
    "i": "i",
    "i:": "i",
    "i\u02d0": "i",
    "e:": "e:",
    "e\u02d0": "e:",
    "e\u02d1": "e:",
    "E": "E",
    "\u025b": "E",
    "a:": "a:",
    "a\u02d0": "a:",
    "A:": "a:",
    "o:": "o:",
    "o\u02d0": "o:",
    "u": "u",
    "u:": "u",
    "u\u02d0": "u",
}

PCM16 = 1
IEEE_FLOAT = 3
EXTENSIBLE = 0xFFFE


class IngestError(ValueError):
    """Raised for malformed or inconsistent input files."""


def canonical_phoneme(label: str) -> str | None:
    """Map an annotation label onto one of the six vowels, or ``None``."""
    label = label.strip()
    if label in PHONEME_ALIASES:
        return PHONEME_ALIASES[label]
    # IPA length marks and their ASCII colon look-alikes
    label = label.replace("\u02d0", ":").replace("\uff1a", ":")
    return PHONEME_ALIASES.get(label)


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise IngestError("mono required")
        if samples.size == 0:
            raise IngestError("empty audio")
        if self.sample_rate <= 0:
            raise IngestError(f"invalid sample rate {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise IngestError("non-finite samples")
        if np.max(np.abs(samples)) > 1.0:
            raise IngestError("samples outside [-1, 1]")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class SegmentInterval:
    start_s: float
    end_s: float
    phoneme: str
    word: str = ""
    stressed: bool = True

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start_s + self.end_s)


@dataclass
class SessionManifest:
    speaker_id: str
    group: str
    entries: list[tuple[Path, Path]]
    sex: str = "unspecified"
    age_years: float | None = None
    segmentation_format: str = "csv"
    tier: str = "phoneme"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.speaker_id:
            raise IngestError("speaker_id must be nonempty")
        if self.group not in GROUPS:
            raise IngestError(f"unknown group {self.group!r}; expected one of {GROUPS}")
        if self.sex not in SEXES:
            raise IngestError(f"unknown sex {self.sex!r}")
        if self.age_years is not None and self.age_years < 0:
            raise IngestError("age_years must be >= 0")
        self.entries = [(Path(a), Path(s)) for a, s in self.entries]

    @property
    def key(self) -> tuple[str, str]:
        return (self.speaker_id, self.group)


@dataclass(frozen=True)
class VowelToken:
    token_id: str
    speaker_id: str
    group: str
    phoneme: str
    word: str
    clip_index: int
    interval: SegmentInterval

    @property
    def start_s(self) -> float:
        return self.interval.start_s

    @property
    def end_s(self) -> float:
        return self.interval.end_s


@dataclass
class Session:
    manifest: SessionManifest
    clips: list[AudioClip]
    tokens: list[VowelToken]
    counts: dict[str, int]

    @property
    def key(self) -> tuple[str, str]:
        return self.manifest.key


@dataclass
class Corpus:
    sessions: list[Session]
    warnings: list[str] = field(default_factory=list)
    dropped_intervals: int = 0

    @property
    def tokens(self) -> list[VowelToken]:
        return [t for s in self.sessions for t in s.tokens]


# ---------------------------------------------------------------- WAV


def _iter_chunks(data: bytes, offset: int):
    while offset + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, offset)
        body = offset + 8
        yield cid, body, size
        offset = body + size + (size & 1)


def read_wav(path) -> AudioClip:
    """Decode a mono PCM16 or float32 RIFF/WAVE file.

    Integer samples are scaled by 1/32768. Stereo input is rejected rather
    than downmixed.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise IngestError(f"{path}: malformed header (not RIFF/WAVE)")

    fmt = None
    pcm = None
    for cid, body, size in _iter_chunks(data, 12):
        if cid == b"fmt ":
            if size < 16:
                raise IngestError(f"{path}: malformed header (short fmt chunk)")
            fmt = struct.unpack_from("<HHIIHH", data, body)
            if fmt[0] == EXTENSIBLE and size >= 40:
                sub = struct.unpack_from("<H", data, body + 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            if fmt is None:
                raise IngestError(f"{path}: malformed header (data before fmt)")
            if body + size > len(data):
                raise IngestError(f"{path}: truncated data chunk")
            pcm = data[body : body + size]
            break
    if fmt is None:
        raise IngestError(f"{path}: malformed header (no fmt chunk)")
    if pcm is None:
        raise IngestError(f"{path}: malformed header (no data chunk)")

    tag, channels, rate, _, block_align, bits = fmt
    if channels != 1:
        raise IngestError(f"{path}: mono required (found {channels} channels)")
    if tag == PCM16 and bits == 16:
        dtype, scale = np.dtype("<i2"), 1 / 32768.0
    elif tag == IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise IngestError(f"{path}: unsupported codec (format {tag}, {bits} bit)")
    if len(pcm) % dtype.itemsize:
        raise IngestError(f"{path}: truncated data chunk")
    if not pcm:
        raise IngestError(f"{path}: empty audio")
    samples = np.frombuffer(pcm, dtype=dtype).astype(np.float64) * scale
    return AudioClip(samples, int(rate))


def encode_pcm16(samples: np.ndarray) -> np.ndarray:
    """Quantize [-1, 1] floats to int16, the inverse of the reader scaling."""
    q = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(path, clip: AudioClip, *, float32: bool = False) -> None:
    if float32:
        pcm = clip.samples.astype("<f4").tobytes()
        tag, bits = IEEE_FLOAT, 32
    else:
        pcm = encode_pcm16(clip.samples).tobytes()
        tag, bits = PCM16, 16
    block = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, tag, 1, clip.sample_rate, clip.sample_rate * block, block, bits,
        b"data", len(pcm),
    )
    Path(path).write_bytes(header + pcm)


# -------------------------------------------------------- segmentation

CSV_HEADER = ["start_s", "end_s", "phoneme", "word", "stressed"]

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f", ""}


def _parse_bool(text: str, where: str) -> bool:
    value = text.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise IngestError(f"{where}: cannot parse stressed flag {text!r}")


def _read_csv_intervals(path: Path) -> list[SegmentInterval]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty segmentation file") from None
        if header != CSV_HEADER:
            raise IngestError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise IngestError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            where = f"{path}:{lineno}"
            try:
                start, end = float(row[0]), float(row[1])
            except ValueError:
                raise IngestError(f"{where}: unparseable time") from None
            if end <= start:
                raise IngestError(f"{where}: inverted interval ({start} >= {end})")
            rows.append(SegmentInterval(start, end, row[2].strip(), row[3].strip(),
                                        _parse_bool(row[4], where)))
    return rows


def _decode_text(raw: bytes) -> str:
    if raw.startswith((b"\xff\xfe", b"\xfe\xff")):
        return raw.decode("utf-16")
    return raw.decode("utf-8-sig")


_TG_NUMBER = r"([-+0-9.eE]+)"
_TG_TEXT = r'"((?:[^"]|"")*)"'


def _read_textgrid_intervals(path: Path, tier: str) -> list[SegmentInterval]:
    """Parse the long-text TextGrid format and return one interval tier.

    Stress is marked in the label with a leading ``'`` or ``ˈ``, or a
    trailing ``1``; unmarked vowels count as stressed only when the tier
    carries no stress marks at all.
    """
    try:
        text = _decode_text(Path(path).read_bytes())
    except UnicodeDecodeError as exc:
        raise IngestError(f"{path}: cannot decode TextGrid ({exc})") from None
    if 'File type = "ooTextFile"' not in text:
        raise IngestError(f"{path}: not a TextGrid long-text file")

    items = re.split(r"\n\s*item\s*\[\d+\]:", text)[1:]
    if not items:
        raise IngestError(f"{path}: no tiers")
    for item in items:
        cls = re.search(r"class\s*=\s*" + _TG_TEXT, item)
        name = re.search(r"name\s*=\s*" + _TG_TEXT, item)
        if not cls or not name or name.group(1) != tier:
            continue
        if cls.group(1) != "IntervalTier":
            raise IngestError(f"{path}: tier {tier!r} is not an interval tier")
        pattern = re.compile(
            r"intervals\s*\[\d+\]:\s*xmin\s*=\s*" + _TG_NUMBER
            + r"\s*xmax\s*=\s*" + _TG_NUMBER + r"\s*text\s*=\s*" + _TG_TEXT
        )
        raw = [(float(a), float(b), t.replace('""', '"')) for a, b, t in pattern.findall(item)]
        marked = any(_stress_mark(t)[1] for _, _, t in raw)
        out = []
        for start, end, label in raw:
            if end <= start:
                raise IngestError(f"{path}: inverted interval ({start} >= {end})")
            if not label.strip():
                continue
            bare, has_mark = _stress_mark(label)
            phone, _, word = bare.partition("|")
            out.append(SegmentInterval(start, end, phone.strip(), word.strip(),
                                       has_mark or not marked))
        return out
    raise IngestError(f"{path}: no tier named {tier!r}")


def _stress_mark(label: str) -> tuple[str, bool]:
    label = label.strip()
    if label[:1] in ("'", "ˈ"):
        return label[1:], True
    phone, sep, word = label.partition("|")
    if phone.endswith("1"):
        return phone[:-1] + sep + word, True
    return label, False


def read_segmentation(path, format: str = "csv", *, tier: str = "phoneme",
                      diagnostics: Counter | None = None) -> list[SegmentInterval]:
    """Return stressed intervals of the six target vowels, sorted by start.

    Labels are canonicalized through :data:`PHONEME_ALIASES`. Intervals of
    other phones or unstressed vowels are dropped and counted under
    ``"dropped_intervals"`` in ``diagnostics`` when given.
    """
    path = Path(path)
    if format == "csv":
        raw = _read_csv_intervals(path)
    elif format == "textgrid":
        raw = _read_textgrid_intervals(path, tier)
    else:
        raise IngestError(f"unknown segmentation format {format!r}")

    raw.sort(key=lambda iv: (iv.start_s, iv.end_s))
    for a, b in zip(raw, raw[1:]):
        if b.start_s < a.end_s - 1e-9:
            raise IngestError(
                f"{path}: overlapping intervals [{a.start_s}, {a.end_s}] and [{b.start_s}, {b.end_s}]"
            )

    kept = []
    for iv in raw:
        phoneme = canonical_phoneme(iv.phoneme)
        if phoneme is None or not iv.stressed:
            continue
        kept.append(SegmentInterval(iv.start_s, iv.end_s, phoneme, iv.word, True))
    if diagnostics is not None:
        diagnostics["dropped_intervals"] += len(raw) - len(kept)
    return kept


# ------------------------------------------------------------ manifests


def load_manifests(path) -> list[SessionManifest]:
    """Load one manifest JSON file, a JSON list of manifests, or a directory of them.

    Relative audio/segmentation paths resolve against the manifest's folder.
    """
    path = Path(path)
    if path.is_dir():
        out = []
        for child in sorted(path.glob("*.json")):
            out.extend(load_manifests(child))
        return out
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IngestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON ({exc})") from None
    docs = doc if isinstance(doc, list) else [doc]
    base = path.parent
    manifests = []
    for d in docs:
        try:
            entries = [(base / e["audio"], base / e["segmentation"]) for e in d["entries"]]
            manifests.append(SessionManifest(
                speaker_id=str(d["speaker_id"]),
                group=d["group"],
                sex=d.get("sex", "unspecified"),
                age_years=d.get("age_years"),
                entries=entries,
                segmentation_format=d.get("segmentation_format", "csv"),
                tier=d.get("tier", "phoneme"),
                metadata=d.get("metadata", {}),
            ))
        except (KeyError, TypeError) as exc:
            raise IngestError(f"{path}: missing manifest field {exc}") from None
    return manifests


def manifest_to_json(manifest: SessionManifest, relative_to: Path | None = None) -> dict:
    def rel(p: Path) -> str:
        if relative_to is not None:
            try:
                return p.relative_to(relative_to).as_posix()
            except ValueError:
                pass
        return p.as_posix()

    return {
        "speaker_id": manifest.speaker_id,
        "group": manifest.group,
        "sex": manifest.sex,
        "age_years": manifest.age_years,
        "segmentation_format": manifest.segmentation_format,
        "tier": manifest.tier,
        "metadata": manifest.metadata,
        "entries": [{"audio": rel(a), "segmentation": rel(s)} for a, s in manifest.entries],
    }


# --------------------------------------------------------------- corpus


def _bind_session(manifest: SessionManifest, tier: str | None) -> tuple[Session, int]:
    diag: Counter = Counter()
    clips, tokens = [], []
    ordinal = 0
    for clip_index, (audio_path, seg_path) in enumerate(manifest.entries):
        if not audio_path.exists():
            raise IngestError(f"dangling file reference: {audio_path}")
        if not seg_path.exists():
            raise IngestError(f"dangling file reference: {seg_path}")
        clip = read_wav(audio_path)
        intervals = read_segmentation(seg_path, manifest.segmentation_format,
                                      tier=tier or manifest.tier, diagnostics=diag)
        for iv in intervals:
            if iv.start_s < 0 or iv.end_s > clip.duration + 1e-9:
                raise IngestError(
                    f"{seg_path}: interval [{iv.start_s}, {iv.end_s}] outside clip "
                    f"duration {clip.duration:.6f} s"
                )
            tokens.append(VowelToken(
                token_id=f"{manifest.speaker_id}-{manifest.group}-{ordinal:04d}",
                speaker_id=manifest.speaker_id,
                group=manifest.group,
                phoneme=iv.phoneme,
                word=iv.word,
                clip_index=clip_index,
                interval=iv,
            ))
            ordinal += 1
        clips.append(clip)
    counts = {v: 0 for v in VOWELS}
    counts.update(Counter(t.phoneme for t in tokens))
    return Session(manifest, clips, tokens, counts), diag["dropped_intervals"]


def build_corpus(manifests: Iterable[SessionManifest], *, tier: str | None = None,
                 min_tokens: int = MIN_TOKENS_PER_VOWEL) -> Corpus:
    """Bind every manifest's files into sessions of vowel tokens.

    Phonemes with fewer than ``min_tokens`` tokens in a session produce a
    warning, not an error.
    """
    manifests = list(manifests)
    if not manifests:
        raise IngestError("at least one manifest required")
    seen = set()
    for m in manifests:
        if m.key in seen:
            raise IngestError(f"duplicate session: speaker {m.speaker_id!r} in group {m.group!r}")
        seen.add(m.key)

    corpus = Corpus(sessions=[])
    for m in manifests:
        session, dropped = _bind_session(m, tier)
        corpus.sessions.append(session)
        corpus.dropped_intervals += dropped
        for phoneme, n in session.counts.items():
            if n < min_tokens:
                msg = f"{m.speaker_id}/{m.group}: {n} tokens of /{phoneme}/ (< {min_tokens})"
                corpus.warnings.append(msg)
                log.warning(msg)
    return corpus


def write_segmentation_csv(path, intervals: Sequence[SegmentInterval]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for iv in intervals:
            writer.writerow([f"{iv.start_s:.6f}", f"{iv.end_s:.6f}", iv.phoneme, iv.word,
                             int(iv.stressed)])
