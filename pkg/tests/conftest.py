import numpy as np
import pytest

from spopt.core import SymplecticPoint, TangentVector
from spopt.geometry import Metric, project_tangent
from spopt.sr import sgs


def random_point(n, k, rng, scale=1.0) -> SymplecticPoint:
    """Seeded feasible point: symplectic factor of a Gaussian matrix."""
    return sgs(scale * rng.standard_normal((2 * n, 2 * k))).s


def random_tangent(x: SymplecticPoint, rng, norm=None) -> TangentVector:
    """Euclidean projection of a Gaussian matrix; optionally rescaled to a
    target Frobenius norm."""
    y = rng.standard_normal(x.entries.shape)
    z = project_tangent(Metric.euclidean(), x, y)
    if norm is not None:
        z = TangentVector(x, z.entries * (norm / np.linalg.norm(z.entries)))
    return z


def random_tangent_spectral(x: SymplecticPoint, rng, norm2: float) -> TangentVector:
    """Random tangent with exact spectral norm ``norm2``."""
    z = random_tangent(x, rng)
    s = np.linalg.norm(z.entries, 2)
    return TangentVector(x, z.entries * (norm2 / s))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
