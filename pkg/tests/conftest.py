import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hwrec.core import Character  # noqa: E402
from hwrec.evaluation import SynthConfig, synth_generate  # noqa: E402
from hwrec.pipeline import preprocess_dataset  # noqa: E402
from hwrec.preprocess import preprocess  # noqa: E402


@pytest.fixture(scope="session")
def small_corpus():
    """5 classes, 20/6 samples, preprocessed."""
    train, test = synth_generate(SynthConfig(n_classes=5, samples_per_class_train=20,
                                             samples_per_class_test=6, noise_sigma=0.01, seed=3))
    return preprocess_dataset(train), preprocess_dataset(test)


@pytest.fixture(scope="session")
def raw_corpus():
    return synth_generate(SynthConfig(n_classes=5, samples_per_class_train=20,
                                      samples_per_class_test=6, noise_sigma=0.01, seed=3))


def make_char(*strokes, span=None):
    return Character(tuple(np.asarray(s, dtype=float) for s in strokes), span=span)


def prep(*strokes):
    return preprocess(make_char(*strokes))


def lshape():
    return [(0, 0), (1, 0), (1, 1)]


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
