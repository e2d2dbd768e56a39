import numpy as np
import pytest

from nudgek.phasetype import SystemConfig, erlang, expo, h2_balanced, h2_shape, normalize_system


def cfg_a(k=2):
    return normalize_system(0.75, 0.5, expo(), expo(), 2.0, k=k)


def cfg_b(k=1):
    return normalize_system(0.75, 0.5, expo(), expo(), 1.5, k=k)


def cfg_c(k=1):
    return normalize_system(0.7, 0.7, expo(), h2_shape(1.0, 2.0, 0.9), 1.2, k=k)


def mm1(lam=0.75, k=0):
    return SystemConfig(lam, 1.0, expo(), expo(), k)


NAMED = {"A": cfg_a, "B": cfg_b, "C": cfg_c}
SHAPES = [expo(), erlang(3), h2_balanced(1.0, 4.0), h2_shape(1.0, 2.0, 0.9)]


def random_config(rng: np.random.Generator, k=1) -> SystemConfig:
    s1 = SHAPES[rng.integers(len(SHAPES))]
    s2 = SHAPES[rng.integers(len(SHAPES))]
    return normalize_system(
        float(rng.uniform(0.1, 0.95)),
        float(rng.uniform(0.05, 0.95)),
        s1,
        s2,
        float(rng.uniform(0.3, 6.0)),
        k=k,
    )


@pytest.fixture(params=sorted(NAMED))
def named_cfg(request):
    return NAMED[request.param]()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
