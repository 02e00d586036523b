import numpy as np
import pytest

from synsem.data import AnnotatedToken, Sentence, Transcript

ACCEPTANCE_RESULTS = []


def record_acceptance(criterion, passed, detail):
    ACCEPTANCE_RESULTS.append((criterion, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(
                f"[{criterion}] {'PASS' if passed else 'FAIL'} {detail}"
            )


def make_token(text="cat", pos="NOUN", dep="nsubj", head=None, onset=0.0, offset=0.3):
    return AnnotatedToken(
        text=text,
        pos=pos,
        dep=dep,
        head=head,
        onset_s=onset,
        offset_s=offset,
        is_content=pos in {"NOUN", "VERB", "ADJ"},
    )


def make_sentence(specs, story="story-a", index=0, start=0.0, step=0.3):
    """specs: list of (text, pos, dep, head)."""
    tokens = []
    for i, (text, pos, dep, head) in enumerate(specs):
        tokens.append(
            make_token(text, pos, dep, head, onset=start + i * step, offset=start + (i + 1) * step)
        )
    return Sentence(story_id=story, sentence_index=index, tokens=tuple(tokens))


@pytest.fixture
def chain3():
    # middle token is the root; both ends attach to it
    return make_sentence(
        [("the", "DET", "det", 1), ("cat", "NOUN", "root", None), ("ran", "VERB", "dep", 1)]
    )


@pytest.fixture
def tiny_transcript():
    sent = make_sentence(
        [("the", "DET", "det", 1), ("cat", "NOUN", "nsubj", 2), ("ran", "VERB", "root", None)]
    )
    return Transcript(
        story_id="story-a", sentences=(sent,), phones=(), tr_times=(1.0, 2.0, 3.0)
    )


def rng(seed=0):
    return np.random.default_rng(seed)
