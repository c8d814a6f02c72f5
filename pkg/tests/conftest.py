import time

import numpy as np
import pytest

from melcode.autoencoder import Corruption
from melcode.nn import Topology, TrainConfig
from melcode.pipeline import train_codec
from melcode.synthetic import SPEAKER_A, harmonic_log_spectra, toy_corpus

ACCEPTANCE_LINES = []
TIMINGS = {}

# desk-scale reproduction of the training protocol (reference batch and epoch counts)
TOY_DIM = 32
TOY_TOPOLOGY = Topology((32, 16, 8))
TOY_LR = 2.0
TOY_PRETRAIN = TrainConfig(batch_size=20, epochs=50, learning_rate=TOY_LR, seed=0)
TOY_FINETUNE = TrainConfig(batch_size=100, epochs=100, learning_rate=TOY_LR, seed=1)
TOY_CORRUPTION = Corruption("masking", 0.3, seed=0)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    status = "PASS" if report.passed else "FAIL"
    line = f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_train():
    return harmonic_log_spectra(2000, TOY_DIM, SPEAKER_A, seed=0)


@pytest.fixture(scope="session")
def toy_heldout():
    return toy_corpus(20, 25, TOY_DIM, SPEAKER_A, seed=100, prefix="held")


@pytest.fixture(scope="session")
def toy_model(toy_train):
    start = time.perf_counter()
    result = train_codec(toy_train, TOY_TOPOLOGY, TOY_CORRUPTION, TOY_PRETRAIN, TOY_FINETUNE,
                         corpus_label="toy-A")
    TIMINGS["toy_model"] = time.perf_counter() - start
    return result


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
