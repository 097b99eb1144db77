import numpy as np
import pytest

from mimo_lab.channel import PacketLayout
from mimo_lab.polar import build_code

# criterion name -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def code_32_16():
    return build_code(32, 16)


@pytest.fixture(scope="session")
def code_16_8():
    return build_code(16, 8)


@pytest.fixture(scope="session")
def code_8_4():
    return build_code(8, 4)


@pytest.fixture
def layout_2x2_bpsk(code_16_8):
    return PacketLayout(M_T=2, M_R=2, scheme="bpsk", code=code_16_8)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
