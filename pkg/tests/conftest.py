"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from reid_sgm.imaging import ForegroundMask, RasterImage
from reid_sgm.sgm import default_palette


def make_image(width, height, seed=0):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    return RasterImage(width=width, height=height, pixels=pixels)


def make_mask(width, height, border=4):
    values = np.zeros((height, width), dtype=np.uint8)
    values[border : height - border, border : width - border] = 1
    return ForegroundMask(width=width, height=height, values=values)


def solid_image(width, height, rgb):
    pixels = np.zeros((height, width, 3), dtype=np.uint8)
    pixels[:, :] = rgb
    return RasterImage(width=width, height=height, pixels=pixels)


@pytest.fixture(scope="session")
def palette():
    return default_palette()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[{status}] {name}", flush=True)
