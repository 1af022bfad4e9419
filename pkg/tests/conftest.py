import numpy as np
import pytest

from dgfl import gin
from dgfl.tudata import Graph


def write_two_graph_fixture(directory, name="tiny"):
    """Triangle labeled 1 plus a single edge labeled 2, TUDataset layout."""
    edges = [(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1), (4, 5), (5, 4)]
    (directory / f"{name}_A.txt").write_text(
        "".join(f"{a}, {b}\n" for a, b in edges))
    (directory / f"{name}_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (directory / f"{name}_graph_labels.txt").write_text("1\n2\n")
    return name


def make_graph(n, edges, label=0, feature_dim=3, rng=None):
    if rng is None:
        feats = np.zeros((n, feature_dim))
        feats[:, 0] = 1.0
    else:
        feats = rng.standard_normal((n, feature_dim))
    return Graph(n, tuple(edges), feats, label)


def random_graph(rng, n_max=8, feature_dim=4, num_classes=2):
    n = int(rng.integers(1, n_max + 1))
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < 0.4]
    feats = rng.standard_normal((n, feature_dim))
    return Graph(n, tuple(edges), feats, int(rng.integers(num_classes)))


def random_model(rng, feature_dim=4, hidden=8, layers=2, num_classes=2):
    dims = gin.GinDims(feature_dim, num_classes, hidden, layers)
    model = gin.init_model(dims, int(rng.integers(2**31)))
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
