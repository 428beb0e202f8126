import pytest

from permcurriculum.harness.config import load_config

TINY = [
    "data.n_train=64", "data.n_val=8", "data.n_test=32", "data.extent=4",
    "perms.size=6", "model.encoder_dim=8", "model.fc6_dim=8", "model.fc7_dim=16", "model.lstm_hidden_dim=6",
    "curriculum.n_groups=3", "curriculum.n_free=3", "curriculum.action_batches=2", "curriculum.episodes=4",
    "curriculum.checkpoint_every=2", "compare.seeds=[0,1]", "compare.episodes=2", "compare.checkpoints=[2]",
    "sweep.sizes=[4,64]", "sweep.repeats=2",
]


def tiny_config(*extra, seed=0, out=None):
    return load_config(overrides=TINY + list(extra), seed=seed, out=out)


@pytest.fixture
def tiny():
    return tiny_config


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains the default desk configuration (minutes)")


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
