from pathlib import Path

import pytest

from vowelmetrics.synth import CorpusRecipe, default_targets, generate_corpus


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Path:
    """Three groups x 3 speakers x 4 tokens per vowel; returns the manifest directory."""
    root = tmp_path_factory.mktemp("small_corpus")
    targets = default_targets()
    recipe = CorpusRecipe(groups={g: dict(targets) for g in ("typical", "pre_surgery", "post_surgery")},
                          tokens_per_phoneme=4, n_speakers=3, seed=7)
    generate_corpus(recipe, root)
    return root / "manifests"


# acceptance criteria report one line each at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
N_CRITERIA = 10


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
