import pytest

from guiflow import fixtures


@pytest.fixture
def mall():
    return fixtures.mall_graph(), fixtures.mall_flow()


@pytest.fixture
def branching():
    g = fixtures.branching_graph()
    return g, fixtures.branching_spec(g)
