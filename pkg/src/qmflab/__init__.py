"""qmflab: tensor-network min-cut analysis, exact Wick moments, spectrum experiments."""

from importlib import resources

from .errors import BudgetExceeded, LemmaViolation, NotConnectedError, ValidationError

__version__ = "0.1.0"

FIXTURES = ("figconn", "fignocut", "figSlessT", "chain_d2", "fignum_candidate",
            "fignum_recovered")


def fixture_path(name: str):
    """Filesystem path of a shipped network fixture ('figconn', 'chain_d2', ...)."""
    ref = resources.files("qmflab").joinpath(f"fixtures/{name}.json")
    if not ref.is_file():
        raise KeyError(f"no fixture named {name!r}; shipped: {', '.join(FIXTURES)}")
    return ref


def load_fixture(name: str):
    from .netgraph import load_network

    return load_network(fixture_path(name).read_text(encoding="utf-8"))
