import os
import shutil

import pytest

from slopt.ir import parse_function
from slopt.jit import cpu_features, host_executable

FIXTURES = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")

requires_exec = pytest.mark.skipif(
    not host_executable(), reason="generated code only runs on x86-64"
)

requires_gas = pytest.mark.skipif(
    not (shutil.which("as") and shutil.which("objcopy")),
    reason="needs a system assembler for differential encoding checks",
)

# Wall-clock timing depends on an otherwise-quiet machine; opt in explicitly.
hardware_timing = pytest.mark.skipif(
    os.environ.get("SLOPT_HW_TESTS") != "1",
    reason="environment-sensitive rdtsc timing; set SLOPT_HW_TESTS=1 to run",
)


def load_fixture(name):
    with open(os.path.join(FIXTURES, f"{name}.json")) as f:
        return parse_function(f.read())


@pytest.fixture(scope="session")
def fixture_specs():
    return {n: load_fixture(n) for n in ["add1", "mul8", "modmul61", "fe_mul"]}


@pytest.fixture(scope="session")
def host_features():
    return cpu_features() if host_executable() else frozenset()
