"""Acoustic vowel clarity and variability from segmented speech recordings."""

from .formants import ExtractionConfig, FormantMeasurement, measure_session, select_ceiling
from .ingest import AudioClip, IngestError, build_corpus, load_manifests, read_segmentation, read_wav
from .metrics import compute_vai, compute_vfd, compute_vsa, corpus_metrics, lobanov_normalize
from .stats import fdr_adjust, paired_t, run_analysis, trim_outliers, welch_t
from .synth import CorpusRecipe, VowelSpec, generate_corpus, synthesize_vowel

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "CorpusRecipe", "ExtractionConfig", "FormantMeasurement", "IngestError",
    "VowelSpec", "build_corpus", "compute_vai", "compute_vfd", "compute_vsa", "corpus_metrics",
    "fdr_adjust", "generate_corpus", "load_manifests", "lobanov_normalize", "measure_session",
    "paired_t", "read_segmentation", "read_wav", "run_analysis", "select_ceiling",
    "synthesize_vowel", "trim_outliers", "welch_t",
]
