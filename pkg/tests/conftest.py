import numpy as np

import pytest
from pytest import fixture

from mrfrec import Interaction, InteractionMatrix, from_interactions


def pytest_addoption(parser):
    parser.addoption(
        "--largescale-data",
        action="store",
        default=None,
        metavar="DIR",
        help="directory with preprocessed full-size interaction datasets",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--largescale-data"):
        return
    skip = pytest.mark.skip(reason="needs --largescale-data DIR")
    for item in items:
        if "largescale" in item.keywords:
            item.add_marker(skip)


@fixture
def largescale_dir(request):
    return request.config.getoption("--largescale-data")


def matrix_from_pairs(pairs, values=None) -> InteractionMatrix:
    "Build an InteractionMatrix from (user, item) ID pairs."
    values = np.ones(len(pairs)) if values is None else np.asarray(values, dtype=np.float64)
    return from_interactions(Interaction(str(u), str(i), float(v)) for (u, i), v in zip(pairs, values))


@fixture
def two_item_matrix():
    "Three users over two items; X = [[1, 1], [1, 0], [0, 1]]."
    return matrix_from_pairs([("u1", "i1"), ("u1", "i2"), ("u2", "i1"), ("u3", "i2")])


@fixture
def two_item_x():
    return np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])


@fixture
def config_file(tmp_path):
    "An empty JSON config, so CLI tests never touch the repository's config.json."
    path = tmp_path / "config.json"
    path.write_text("{}", encoding="utf-8")
    return path


@fixture
def pairs_matrix():
    return matrix_from_pairs
