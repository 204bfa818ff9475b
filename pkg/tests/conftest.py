import numpy as np
import pytest


def natural_images(shape=(256, 320)):
    """Five bundled photographs as float RGB crops in [0, 1]."""
    from skimage import data

    out = {}
    for name in ("astronaut", "coffee", "chelsea", "rocket", "camera"):
        img = getattr(data, name)().astype(np.float64) / 255.0
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        out[name] = np.ascontiguousarray(img[: shape[0], : shape[1], :3])
    return out


@pytest.fixture(scope="session")
def naturals():
    return natural_images()


@pytest.fixture(scope="session")
def astronaut():
    from skimage import data

    return data.astronaut().astype(np.float64) / 255.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
