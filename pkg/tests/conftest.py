import pytest

from dcslab import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # pay any jit compilation cost once, before timed tests run
    kernels.warm_up()
