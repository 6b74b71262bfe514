import numpy as np
import pytest

from odesign.models import (
    LOTKA_VOLTERRA_SPACE,
    THREE_COMPARTMENT_SPACE,
    TimeGrid,
    builtin_lotka_volterra,
    builtin_three_compartment,
)


@pytest.fixture(scope="session")
def lv():
    return builtin_lotka_volterra()


@pytest.fixture(scope="session")
def c3():
    return builtin_three_compartment()


@pytest.fixture(scope="session")
def lv_grid():
    return TimeGrid(0.0, 10.0, 101)


@pytest.fixture(scope="session")
def c3_grid():
    return TimeGrid(0.0, 25.0, 101)


@pytest.fixture(scope="session")
def lv_space():
    return LOTKA_VOLTERRA_SPACE


@pytest.fixture(scope="session")
def c3_space():
    return THREE_COMPARTMENT_SPACE


def scaled_deviation(a, b):
    """max |a - b| / max(1, |b|), a relative measure with an absolute floor
    so that near-zero entries of huge matrices do not dominate."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))
