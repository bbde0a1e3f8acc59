import os

import numpy as np
import pytest

from mrigen_eval.cli import main as cli_main

ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Store and print one acceptance line; shown again in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def phantom_sets(tmp_path_factory):
    """A real and a synthetic phantom directory written through the CLI."""
    root = tmp_path_factory.mktemp("phantoms")
    real, synth = root / "real", root / "synth"
    common = ["--n", "10", "--shape", "32,32,32", "--noise", "0.05"]
    assert cli_main(["phantom", "--out", str(real), "--seed", "1", *common]) == 0
    assert cli_main(["phantom", "--out", str(synth), "--seed", "2", "--scale-region", "alpha=1.1", *common]) == 0
    return real, synth, os.path.join(real, "config.ini")
