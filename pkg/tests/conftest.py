import numpy as np

from bseig.core import PhiBlockMatrix
from bseig.ortho import c_orthonormalize_cgs


def rand_complex(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def rand_phi(rng, n, k, y_scale=0.5):
    return PhiBlockMatrix(
        rand_complex(rng, (n, k)), rand_complex(rng, (n, k), y_scale)
    )


def rand_c_orthonormal(rng, n, k):
    out, _ = c_orthonormalize_cgs(rand_phi(rng, n, k, 0.4))
    return out
