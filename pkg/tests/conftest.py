"""Shared fixtures plus the acceptance-criteria summary section."""

import numpy as np
import pytest

from kgcopy.corpus import Vocabulary
from kgcopy.kg import LocalKG, Triple
from kgcopy.model import KGCopyModel

# one line per acceptance criterion, printed after the test run
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, ok: bool, detail: str = "",
                      skipped: bool = False) -> None:
    status = "SKIP" if skipped else ("PASS" if ok else "FAIL")
    suffix = f" ({detail})" if detail else ""
    ACCEPTANCE_LINES.append(f"[{status}] {name}{suffix}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def arsenal_kg() -> LocalKG:
    return LocalKG.from_triples("arsenal", [
        Triple("arsenal", "home ground", "emirates stadium"),
        Triple("arsenal", "captain", "laurent koscielny"),
        Triple("arsenal", "coach", "unai emery"),
    ])


@pytest.fixture
def small_vocab() -> Vocabulary:
    words = ["the", "home", "ground", "of", "arsenal", "is", "emirates",
             "stadium", "who", "captain", "laurent", "koscielny", "coach",
             "unai", "emery", "what", "?", ".", "a", "great", "team"]
    return Vocabulary(list(Vocabulary.RESERVED) + words)


@pytest.fixture
def small_model() -> KGCopyModel:
    # eval-dominant setup: tiny dims, no dropout surprises unless train=True
    return KGCopyModel(v=26, d_emb=8, h_dim=6, k_max=4,
                       dropout_rnn=0.2, dropout_emb=0.2, seed=3)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
