"""Command-line pipeline: extract -> metrics -> compare -> plot, plus synth-demo.

Each stage reads the previous stage's CSVs from ``--in`` (default: the
``--out`` directory) so stages can be rerun independently.

Exit codes: 0 success, 1 finished with warnings, 2 input error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import report
from .formants import ExtractionConfig, ExtractionDiagnostics, measure_session
from .ingest import IngestError, build_corpus, load_manifests
from .metrics import corpus_metrics
from .plots import write_plots
from .stats import run_analysis
from .synth import CorpusRecipe, effect_recipe, generate_corpus

log = logging.getLogger("vowelmetrics")

EXIT_OK, EXIT_PARTIAL, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
FORMATS = ("csv", "json", "svg")


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


@dataclass
class RunConfig:
    manifests: list[Path] = field(default_factory=list)
    out_dir: Path = Path("vowelmetrics_out")
    in_dir: Path | None = None
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    tier: str | None = None
    norm_scope: str = "session"
    corner_stat: str = "mean"
    seed: int = 0
    formats: tuple[str, ...] = FORMATS
    threads: int | None = None

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.manifests = [Path(m) for m in self.manifests]
        if self.norm_scope not in ("session", "speaker"):
            raise InputError(f"unknown normalization scope {self.norm_scope!r}")
        if self.corner_stat not in ("mean", "median"):
            raise InputError(f"unknown corner statistic {self.corner_stat!r}")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise InputError(f"unknown report formats {bad}")

    @property
    def source(self) -> Path:
        return Path(self.in_dir) if self.in_dir is not None else self.out_dir


@dataclass
class StageResult:
    paths: list[Path]
    warnings: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.warnings else EXIT_OK


def thread_cap(default: int | None = None) -> int:
    raw = os.environ.get("VOWELMETRICS_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise InputError(f"VOWELMETRICS_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise InputError("VOWELMETRICS_THREADS must be >= 1")
        return n
    return default or min(8, os.cpu_count() or 1)


# ------------------------------------------------------------------ stages


def cmd_extract(cfg: RunConfig) -> StageResult:
    if not cfg.manifests:
        raise InputError("no manifests given (--manifest)")
    manifests = []
    for m in cfg.manifests:
        manifests.extend(load_manifests(m))
    corpus = build_corpus(manifests, tier=cfg.tier)
    for s in corpus.sessions:
        for clip in s.clips:
            try:
                cfg.extraction.check_sample_rate(clip.sample_rate)
            except ValueError as exc:
                raise InputError(f"{s.manifest.speaker_id}/{s.manifest.group}: {exc}") from None

    workers = cfg.threads or thread_cap()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(lambda s: measure_session(s, cfg.extraction), corpus.sessions))

    diag = ExtractionDiagnostics()
    measurements = []
    for ms, d in outcomes:
        measurements.extend(ms)
        diag.merge(d)
    assert diag.tokens_in == diag.measured + diag.dropped + diag.flagged

    warnings = list(corpus.warnings)
    if diag.dropped:
        warnings.append(f"{diag.dropped} tokens dropped (no usable frames)")
    paths = []
    if "csv" in cfg.formats:
        paths.append(report.write_measurements(cfg.out_dir / report.MEASUREMENTS_CSV, measurements))
    if "json" in cfg.formats:
        paths.append(report.write_json(
            cfg.out_dir / report.DIAGNOSTICS_JSON,
            report.diagnostics_payload(diag, corpus.warnings, corpus.dropped_intervals)))
    log.info("extract: %d tokens in, %d measured, %d dropped, %d flagged",
             diag.tokens_in, diag.measured, diag.dropped, diag.flagged)
    return StageResult(paths, warnings)


def cmd_metrics(cfg: RunConfig, measurements_csv: Path | None = None) -> StageResult:
    path = measurements_csv or cfg.source / report.MEASUREMENTS_CSV
    ms = report.read_measurements(path)
    if not ms:
        raise InputError(f"{path}: no measurements")
    cm = corpus_metrics(ms, norm_scope=cfg.norm_scope, corner_stat=cfg.corner_stat)
    for reason in cm.omitted:
        log.warning("metrics: %s", reason)
    paths = report.write_metrics(cfg.out_dir, cm, norm_scope=cfg.norm_scope,
                                 corner_stat=cfg.corner_stat)
    return StageResult(paths, list(cm.omitted))


def _load_metrics(cfg: RunConfig, clarity_csv, variability_csv):
    clarity = report.read_clarity(clarity_csv or cfg.source / report.CLARITY_CSV)
    vfd, points = report.read_variability(variability_csv or cfg.source / report.VARIABILITY_CSV)
    return clarity, vfd, points


def cmd_compare(cfg: RunConfig, clarity_csv: Path | None = None,
                variability_csv: Path | None = None) -> StageResult:
    clarity, vfd, _ = _load_metrics(cfg, clarity_csv, variability_csv)
    groups = {c.group for c in clarity} | {v.group for v in vfd}
    if len(groups) < 2:
        raise InputError(f"comparison needs at least two groups, found {sorted(groups)}")
    analysis = run_analysis(clarity, vfd)
    paths = report.write_results(cfg.out_dir, analysis, formats=cfg.formats)
    warnings = [f"{g['response']} {g['phoneme']} {g['contrast']}: {g['reason']}" for g in analysis.gaps]
    return StageResult(paths, warnings)


def cmd_plot(cfg: RunConfig, clarity_csv: Path | None = None,
             variability_csv: Path | None = None) -> StageResult:
    clarity, vfd, points = _load_metrics(cfg, clarity_csv, variability_csv)
    if not clarity and not points:
        raise InputError("empty input: nothing to plot")
    return StageResult(write_plots(cfg.out_dir, clarity, vfd, points))


def cmd_synth_demo(out_dir: Path, *, seed: int = 0, null: bool = False, n_speakers: int = 11,
                   tokens_per_phoneme: int = 12) -> StageResult:
    kw = dict(seed=seed, n_speakers=n_speakers, tokens_per_phoneme=tokens_per_phoneme)
    recipe = CorpusRecipe.null(**kw) if null else effect_recipe(**kw)
    return StageResult(generate_corpus(recipe, out_dir))


def run_pipeline(cfg: RunConfig) -> StageResult:
    """All four stages in order, writing everything into ``cfg.out_dir``."""
    staged = RunConfig(**{**cfg.__dict__, "in_dir": cfg.out_dir})
    stages = [cmd_extract(staged), cmd_metrics(staged), cmd_compare(staged)]
    if "svg" in cfg.formats:
        stages.append(cmd_plot(staged))
    return StageResult([p for s in stages for p in s.paths], [w for s in stages for w in s.warnings])


# ------------------------------------------------------------------ parsing


def _ceilings(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ceiling list {text!r}") from None


def _formats(text: str) -> tuple[str, ...]:
    out = tuple(f.strip().lower() for f in text.split(",") if f.strip())
    bad = [f for f in out if f not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown formats {bad}; choose from {FORMATS}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vowelmetrics", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, inputs=True):
        sp.add_argument("--out", type=Path, default=Path("vowelmetrics_out"),
                        help="output directory (default: %(default)s)")
        if inputs:
            sp.add_argument("--in", dest="in_dir", type=Path, default=None,
                            help="directory holding the previous stage's CSVs (default: --out)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", dest="formats", type=_formats, default=FORMATS,
                        help="comma-separated subset of csv,json,svg")

    ex = sub.add_parser("extract", help="measure F1/F2 for every segmented vowel token")
    common(ex, inputs=False)
    ex.add_argument("--manifest", nargs="+", type=Path, required=True,
                    help="manifest JSON files or directories of them")
    ex.add_argument("--ceilings", type=_ceilings, default=None,
                    help="comma-separated formant ceilings in Hz")
    ex.add_argument("--time-step", type=float, default=None)
    ex.add_argument("--window", type=float, default=None)
    ex.add_argument("--tier", default=None, help="TextGrid tier name (default: phoneme)")

    me = sub.add_parser("metrics", help="VAI/VSA per session and VFD per token")
    common(me)
    me.add_argument("--measurements", type=Path, default=None)
    me.add_argument("--norm-scope", choices=("session", "speaker"), default="session")
    me.add_argument("--corner-stat", choices=("mean", "median"), default="mean")

    co = sub.add_parser("compare", help="group contrasts with FDR correction")
    common(co)
    co.add_argument("--clarity", type=Path, default=None)
    co.add_argument("--variability", type=Path, default=None)

    pl = sub.add_parser("plot", help="SVG vowel spaces and VAI figures")
    common(pl)
    pl.add_argument("--clarity", type=Path, default=None)
    pl.add_argument("--variability", type=Path, default=None)

    sd = sub.add_parser("synth-demo", help="write a synthetic demo corpus")
    common(sd, inputs=False)
    sd.add_argument("--null", action="store_true", help="identical targets in all groups")
    sd.add_argument("--speakers", type=int, default=11)
    sd.add_argument("--tokens", type=int, default=12)
    return p


def _config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "ceilings", None):
        overrides["ceilings_hz"] = args.ceilings
    if getattr(args, "time_step", None) is not None:
        overrides["time_step_s"] = args.time_step
    if getattr(args, "window", None) is not None:
        overrides["window_s"] = args.window
    try:
        extraction = ExtractionConfig(**overrides)
    except ValueError as exc:
        raise InputError(f"invalid extraction settings: {exc}") from None
    return RunConfig(
        manifests=getattr(args, "manifest", None) or [], out_dir=args.out,
        in_dir=getattr(args, "in_dir", None), extraction=extraction,
        tier=getattr(args, "tier", None), norm_scope=getattr(args, "norm_scope", "session"),
        corner_stat=getattr(args, "corner_stat", "mean"), seed=args.seed, formats=args.formats,
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth-demo":
            result = cmd_synth_demo(args.out, seed=args.seed, null=args.null,
                                    n_speakers=args.speakers, tokens_per_phoneme=args.tokens)
        else:
            cfg = _config(args)
            if args.command == "extract":
                result = cmd_extract(cfg)
            elif args.command == "metrics":
                result = cmd_metrics(cfg, args.measurements)
            elif args.command == "compare":
                result = cmd_compare(cfg, args.clarity, args.variability)
            else:
                result = cmd_plot(cfg, args.clarity, args.variability)
    except (InputError, IngestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for p in result.paths:
        print(p)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
