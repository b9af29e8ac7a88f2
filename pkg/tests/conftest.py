import pytest

from app.harness import run_scenario
from app.scenario import build_scenario, default_scenario


@pytest.fixture(scope="session")
def config():
    return default_scenario()


@pytest.fixture(scope="session")
def bundle(config):
    return build_scenario(config)


@pytest.fixture(scope="session")
def canonical(bundle):
    return bundle.canonical


@pytest.fixture(scope="session")
def healthy_run(config):
    return run_scenario(config.healthy(), seed=7)


@pytest.fixture(scope="session")
def attack_run(config):
    return run_scenario(config, seed=7)
