import numpy as np
import pytest

from burstsynth.raw_core import RawBayerFrame, RgbImage


def make_frame(rng, height=16, width=24, cfa="RGGB", black=64, white=1023):
    data = rng.integers(black, white + 1, size=(height, width)).astype(np.uint16)
    return RawBayerFrame(data=data, cfa=cfa, black_level=black, white_level=white)


def make_rgb(rng, height=16, width=24):
    return RgbImage(rng.random((height, width, 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
