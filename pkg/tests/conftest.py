import random

import pytest

from edgecolor_lab.instance import tree_from_parents


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture
def path3():
    """Three-edge path with full lists over three colors."""
    return tree_from_parents([0, 1, 2], 3)
