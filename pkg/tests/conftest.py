import numpy as np
import pytest

from londn.data_model import SamplingMask, normalize_smaps
from londn.mri_forward import ForwardModel


def random_image(rng, h, w=None):
    w = h if w is None else w
    return rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))


def random_model(rng, h, w=None, ncoils=2, frac=0.5):
    w = h if w is None else w
    cols = (rng.random(w) < frac).astype(np.uint8)
    cols[w // 2] = 1
    mask = SamplingMask.from_columns(cols, h, accel=2, center_lines=1)
    smaps = normalize_smaps(random_image(rng, h, w)[None].repeat(ncoils, 0) + random_image(rng, ncoils * h, w).reshape(ncoils, h, w))
    return ForwardModel(mask, smaps)


def full_single_coil(h, w=None):
    w = h if w is None else w
    mask = SamplingMask(np.ones((h, w), dtype=np.uint8))
    return ForwardModel(mask, np.ones((1, h, w), dtype=np.complex128))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
