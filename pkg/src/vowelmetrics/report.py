"""CSV and JSON artifacts exchanged between pipeline stages.

CSVs are UTF-8 with RFC 4180 quoting (CRLF line ends, as the csv module
writes by default). Floats are written with ``repr`` so they round-trip
exactly; JSON is sorted and indented so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .formants import ExtractionDiagnostics, FormantMeasurement
from .ingest import GROUPS, IngestError
from .metrics import ClarityScore, CorpusMetrics, NormalizedPoint, VfdValue
from .stats import AnalysisResult, ComparisonResult

MEASUREMENT_FIELDS = ["token_id", "speaker", "group", "phoneme", "word", "f1_hz", "f2_hz",
                      "b1_hz", "b2_hz", "ceiling_hz", "n_frames", "flagged"]
CLARITY_FIELDS = ["speaker", "group", "vai", "vsa_hz2"]
VARIABILITY_FIELDS = ["token_id", "speaker", "group", "phoneme", "vfd", "log_vfd", "z1", "z2"]
RESULT_FIELDS = ["contrast", "response", "phoneme", "estimate", "statistic", "df",
                 "p_raw", "p_adj", "n_A", "n_B"]
DESCRIPTIVE_FIELDS = ["cell", "n", "mean", "sd"]

MEASUREMENTS_CSV = "measurements.csv"
DIAGNOSTICS_JSON = "extract_diagnostics.json"
CLARITY_CSV = "clarity.csv"
VARIABILITY_CSV = "variability.csv"
METRICS_JSON = "metrics_summary.json"
RESULTS_CSV = "results.csv"
DESCRIPTIVES_CSV = "descriptives.csv"
RESULTS_JSON = "results.json"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_json_clean(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path, required: Sequence[str]) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in required if f not in (reader.fieldnames or [])]
        if missing:
            raise IngestError(f"{path}: missing columns {missing}")
        rows = list(reader)
    return rows


def _float(row: dict, key: str, path) -> float:
    try:
        return float(row[key])
    except (TypeError, ValueError):
        raise IngestError(f"{path}: bad value {row.get(key)!r} in column {key}") from None


# ------------------------------------------------------------ measurements


def write_measurements(path, measurements: Sequence[FormantMeasurement]) -> Path:
    return write_csv(path, MEASUREMENT_FIELDS, (
        (m.token_id, m.speaker_id, m.group, m.phoneme, m.word, m.f1_hz, m.f2_hz, m.b1_hz,
         m.b2_hz, m.ceiling_hz, m.n_frames, m.flagged) for m in measurements))


def read_measurements(path) -> list[FormantMeasurement]:
    out = []
    for row in read_csv(path, MEASUREMENT_FIELDS):
        out.append(FormantMeasurement(
            token_id=row["token_id"], speaker_id=row["speaker"], group=row["group"],
            phoneme=row["phoneme"], word=row["word"],
            f1_hz=_float(row, "f1_hz", path), f2_hz=_float(row, "f2_hz", path),
            b1_hz=_float(row, "b1_hz", path), b2_hz=_float(row, "b2_hz", path),
            ceiling_hz=_float(row, "ceiling_hz", path), n_frames=int(row["n_frames"]),
            flagged=row["flagged"].strip() in ("1", "true", "True")))
    return out


def diagnostics_payload(diag: ExtractionDiagnostics, warnings: Sequence[str] = (),
                        dropped_intervals: int = 0) -> dict:
    return {
        "tokens_in": diag.tokens_in,
        "tokens_measured": diag.measured,
        "dropped": diag.dropped,
        "flagged": diag.flagged,
        "dropped_token_ids": list(diag.dropped_ids),
        "ceilings_hz": {"/".join(k) if isinstance(k, tuple) else str(k): v
                        for k, v in sorted(diag.ceilings.items())},
        "ingest_warnings": list(warnings),
        "dropped_intervals": dropped_intervals,
    }


# ----------------------------------------------------------------- metrics


def write_metrics(out_dir, cm: CorpusMetrics, *, norm_scope: str = "session",
                  corner_stat: str = "mean") -> list[Path]:
    out_dir = Path(out_dir)
    clarity = sorted(cm.clarity, key=lambda c: (c.speaker_id, c.group))
    paths = [
        write_csv(out_dir / CLARITY_CSV, CLARITY_FIELDS,
                  ((c.speaker_id, c.group, c.vai, c.vsa_hz2) for c in clarity)),
        write_csv(out_dir / VARIABILITY_CSV, VARIABILITY_FIELDS,
                  ((v.token_id, v.speaker_id, v.group, v.phoneme, v.vfd, v.log_vfd, p.z1, p.z2)
                   for v, p in zip(cm.vfd, cm.points))),
        write_json(out_dir / METRICS_JSON, metrics_summary(clarity, cm.vfd, omitted=cm.omitted,
                                                            norm_scope=norm_scope,
                                                            corner_stat=corner_stat)),
    ]
    return paths


def _mean_sd(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"n": int(v.size), "mean": float(v.mean()) if v.size else None,
            "sd": float(v.std(ddof=1)) if v.size >= 2 else None}


def metrics_summary(clarity: Sequence[ClarityScore], vfd: Sequence[VfdValue], *,
                    omitted: Sequence[str] = (), norm_scope: str = "session",
                    corner_stat: str = "mean") -> dict:
    """Per-group means and SDs of VAI, VSA and log-VFD."""
    groups = [g for g in GROUPS if any(c.group == g for c in clarity) or any(v.group == g for v in vfd)]
    extra = sorted({c.group for c in clarity} | {v.group for v in vfd} - set(groups))
    summary = {}
    for g in groups + extra:
        rows = [c for c in clarity if c.group == g]
        vf = defaultdict(list)
        for v in vfd:
            if v.group == g:
                vf[v.phoneme].append(v.log_vfd)
        summary[g] = {
            "vai": _mean_sd([c.vai for c in rows]),
            "vsa_hz2": _mean_sd([c.vsa_hz2 for c in rows]),
            "log_vfd": {ph: _mean_sd(vals) for ph, vals in sorted(vf.items())},
        }
    return {"groups": summary, "omitted": list(omitted), "norm_scope": norm_scope,
            "corner_stat": corner_stat, "n_sessions": len(clarity), "n_tokens": len(vfd)}


def read_clarity(path) -> list[ClarityScore]:
    return [ClarityScore(r["speaker"], r["group"], _float(r, "vai", path),
                         _float(r, "vsa_hz2", path), {})
            for r in read_csv(path, CLARITY_FIELDS)]


def read_variability(path) -> tuple[list[VfdValue], list[NormalizedPoint]]:
    rows = read_csv(path, VARIABILITY_FIELDS)
    vfd = [VfdValue(r["token_id"], r["speaker"], r["group"], r["phoneme"],
                    _float(r, "vfd", path), _float(r, "log_vfd", path)) for r in rows]
    pts = [NormalizedPoint(r["token_id"], r["speaker"], r["group"], r["phoneme"],
                           _float(r, "z1", path), _float(r, "z2", path)) for r in rows]
    return vfd, pts


# ----------------------------------------------------------------- results


def _result_row(r: ComparisonResult) -> list:
    return [r.contrast, r.response, r.phoneme, r.estimate, r.statistic, r.df,
            r.p_raw, r.p_adj, r.n_a, r.n_b]


def _trim_payload(rep) -> dict:
    return {"n_total": rep.n_total, "n_removed": rep.n_removed, "fraction": rep.fraction,
            "removed_ids": rep.removed_ids}


def write_results(out_dir, analysis: AnalysisResult, *, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    if "csv" in formats:
        paths.append(write_csv(out_dir / RESULTS_CSV, RESULT_FIELDS,
                               (_result_row(r) for r in analysis.results)))
        paths.append(write_csv(out_dir / DESCRIPTIVES_CSV, DESCRIPTIVE_FIELDS,
                               ((d.cell, d.n, d.mean, d.sd) for d in analysis.descriptives)))
    if "json" in formats:
        payload = {
            "results": [dict(zip(RESULT_FIELDS, _result_row(r)), paired=r.paired)
                        for r in analysis.results],
            "descriptives": [dict(zip(DESCRIPTIVE_FIELDS, (d.cell, d.n, d.mean, d.sd)))
                             for d in analysis.descriptives],
            "trim": _trim_payload(analysis.trim),
            "vai_trim": _trim_payload(analysis.vai_trim),
            "gaps": analysis.gaps,
            "alpha": 0.05,
        }
        paths.append(write_json(out_dir / RESULTS_JSON, payload))
    return paths


def read_results(path) -> list[dict]:
    rows = read_csv(path, RESULT_FIELDS)
    for r in rows:
        for k in ("estimate", "statistic", "df", "p_raw", "p_adj"):
            r[k] = float(r[k])
        r["n_A"], r["n_B"] = int(r["n_A"]), int(r["n_B"])
    return rows
