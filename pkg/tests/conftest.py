import pytest

from mmdl.training import TrainConfig

TINY_SYNTH = {"identities": 8, "samples_per_identity": 3, "latent_dim": 4, "input_dim": 12}


@pytest.fixture
def tiny_config():
    """A few-second training run on a small synthetic problem."""
    return TrainConfig(layer_sizes=(12, 16, 8), q=8, batch_size=8, epochs=4, pretrain_epochs=2,
                       synth=dict(TINY_SYNTH), test_identities=4, seed=1)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
