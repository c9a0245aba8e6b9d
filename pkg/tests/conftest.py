import os

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_data():
    from radvlp.pipeline import desk_corpus

    return desk_corpus(seed=0, n_studies=40)


@pytest.fixture(scope="session")
def tiny_tokenizer(tiny_data):
    from radvlp.pipeline import corpus_tokenizer

    return corpus_tokenizer(tiny_data)


@pytest.fixture
def tiny_model(tiny_tokenizer):
    from radvlp.labels.schemas import DESK_8
    from radvlp.models.dual import build_model

    return build_model(DESK_8, tiny_tokenizer, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Acceptance criteria report one line each; repeat them after the run so they
# are visible without -s.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
