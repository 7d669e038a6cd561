import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trajectoid.path_model import gen_fourier_random, gen_v_path

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def fourier0():
    return gen_fourier_random(0)


@pytest.fixture(scope="session")
def v_path():
    return gen_v_path(1.0, 1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


HALF_PI = math.pi / 2
