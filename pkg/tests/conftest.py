import pytest

from qmflab import load_fixture


@pytest.fixture(scope="session")
def figconn():
    return load_fixture("figconn")


@pytest.fixture(scope="session")
def fignocut():
    return load_fixture("fignocut")


@pytest.fixture(scope="session")
def figslesst():
    return load_fixture("figSlessT")


@pytest.fixture(scope="session")
def chain_d2():
    return load_fixture("chain_d2")


@pytest.fixture(scope="session")
def fignum_candidate():
    return load_fixture("fignum_candidate")


@pytest.fixture(scope="session")
def fignum_recovered():
    return load_fixture("fignum_recovered")
