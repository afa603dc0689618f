"""Session-wide BLAS thread pinning: the suite works on small matrices where
multi-threaded BLAS spin-waits dominate runtime."""

import pytest

from gpnn._threads import single_threaded_blas


@pytest.fixture(scope="session", autouse=True)
def pinned_blas():
    with single_threaded_blas():
        yield
