import pytest

from podpipe.fieldmodel import FieldLayout
from podpipe.fieldsim import SimConfig, generate_collections, generate_ground_truth, zero_noise


def small_cfg(seed=0, n_columns=4, n_ranges=8, **kw) -> SimConfig:
    return SimConfig(layout=FieldLayout(n_ranges=n_ranges, n_columns=n_columns), seed=seed, **kw)


@pytest.fixture(scope="session")
def small_sim():
    cfg = small_cfg(seed=11)
    truth = generate_ground_truth(cfg)
    return cfg, truth, generate_collections(cfg, truth)


@pytest.fixture(scope="session")
def quiet_sim():
    cfg = zero_noise(small_cfg(seed=5))
    truth = generate_ground_truth(cfg)
    return cfg, truth, generate_collections(cfg, truth)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
