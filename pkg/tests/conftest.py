import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_world():
    """Synthetic dataset, split, and a briefly trained small bundle."""
    from surge_extrap.pipeline import prepare
    from surge_extrap.synth import FieldSpec, generate_dataset
    from surge_extrap.training import TrainConfig, fit

    h = generate_dataset(FieldSpec(seed=0))
    prep = prepare(h.stations, seed=0)
    train, test = prep.partition()
    test_ids = {o.station_id for o in test}
    stations = [s for s in h.stations if s.station_id in test_ids]
    cfg = TrainConfig(n_layers=2, hidden=4, epochs=2, seed=0)
    return {"synth": h, "prep": prep, "train": train, "test": test,
            "test_stations": stations, "bundle": fit(train, test, cfg)}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
