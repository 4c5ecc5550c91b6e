import pytest

from lorascale import kernels


@pytest.fixture(params=kernels.available_backends())
def kernel_backend(request):
    """Run the test once per built kernel backend."""
    previous = kernels.active_backend()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)
