import numpy as np
import pytest

from dpcr import _pykernels
from dpcr.data import load_bundled


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def us():
    return load_bundled("USA")


@pytest.fixture(scope="session")
def us_smoothed(us):
    from dpcr.smoothing import smooth_dataset

    return smooth_dataset(us, sexes=["female"])[0]


def _backends():
    try:
        from dpcr import _ckernels
    except ImportError:
        return [pytest.param(_pykernels, id="python")]
    return [pytest.param(_ckernels, id="cython"), pytest.param(_pykernels, id="python")]


@pytest.fixture(params=_backends())
def backend(request):
    return request.param


def ar1_panel(rng, p, n, phi, noise=0.0):
    """Curves z_t(x) = kappa_t * b(x) + noise with AR(1) kappa."""
    kappa = np.zeros(n)
    e = rng.standard_normal(n)
    for t in range(1, n):
        kappa[t] = phi * kappa[t - 1] + e[t]
    b = np.sin(np.linspace(0, np.pi, p))
    return np.outer(b, kappa) + noise * rng.standard_normal((p, n))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
