import pytest
from hypothesis import HealthCheck, settings

from capforge.fixtures import data_path, default_catalogue, load_json
from capforge.landscape import load_hlps, load_landscape
from capforge.recipes import load_recipe_book
from capforge.refine import load_mapping

settings.register_profile("suite", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture(scope="session")
def catalogue():
    return default_catalogue()


@pytest.fixture(scope="session")
def mapping():
    return load_mapping(data_path("mapping.json"))


@pytest.fixture(scope="session")
def reference_landscape(catalogue):
    return load_landscape(data_path("landscape_reference.json"), catalogue)


@pytest.fixture(scope="session")
def reference_hlps():
    return load_hlps(data_path("hlp_reference.json"))


@pytest.fixture(scope="session")
def remediation_landscape(catalogue):
    return load_landscape(data_path("landscape_remediation.json"), catalogue)


@pytest.fixture(scope="session")
def filtered_landscape(catalogue):
    return load_landscape(data_path("landscape_remediation_filtered.json"), catalogue)


@pytest.fixture(scope="session")
def recipe_book():
    return load_recipe_book(data_path("recipes.json"))


@pytest.fixture()
def iptables_mlp():
    return load_json("mlp", "iptables_example.json")


@pytest.fixture()
def generic_mlp():
    return load_json("mlp", "generic_filter.json")
