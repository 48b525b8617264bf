import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seqconf.corpus import Utterance, WordHyp  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_utt(uid, reference, hyp_tokens, am=-1.0, lm=-2.0, dur=200, phones=3):
    words = tuple(WordHyp(t, am, lm, dur, phones) for t in hyp_tokens)
    return Utterance(uid, tuple(reference), words)


@pytest.fixture
def utt_factory():
    return make_utt
