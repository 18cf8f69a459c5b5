import numpy as np
import pytest
from scipy import ndimage


def band_limited_noise(height, width, seed=0, sigma=1.5):
    """Smooth seeded noise texture in [0.05, 0.95], wrap-padded."""
    rng = np.random.default_rng(seed)
    t = ndimage.gaussian_filter(rng.random((height, width)), sigma, mode="wrap")
    t = (t - t.min()) / (t.max() - t.min() + 1e-12)
    return 0.05 + 0.9 * t


def shifted_pair(texture, shift_x, shift_y=0):
    """Crop a pair (a, b) with b(x) = a(x - shift): content moves by +shift."""
    sx, sy = abs(shift_x), abs(shift_y)
    h, w = texture.shape
    a = texture[sy : h - sy, sx : w - sx]
    b = texture[sy - shift_y : h - sy - shift_y, sx - shift_x : w - sx - shift_x]
    return a, b


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
