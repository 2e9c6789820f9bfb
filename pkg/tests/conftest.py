import pytest

from helpers import build_catalog


@pytest.fixture(scope="session")
def session_catalog(tmp_path_factory):
    """One desk-scale catalog (0.5 s clips) shared across the session."""
    root = tmp_path_factory.mktemp("assets")
    catalog, manifest_path = build_catalog(root)
    return catalog, manifest_path


@pytest.fixture
def catalog(session_catalog):
    return session_catalog[0]


@pytest.fixture
def catalog_manifest(session_catalog):
    return session_catalog[1]
