import pytest

from activeht import OracleCache, load_environment

# Base seed for every seeded statistical check in the suite; results are
# deterministic, so the asserted bands hold on every run.
BASE_SEED = 20240811


@pytest.fixture(scope="session")
def skewed():
    return load_environment("skewed")


@pytest.fixture(scope="session")
def hard_weak():
    return load_environment("hard-weak")


@pytest.fixture(scope="session")
def degenerate():
    return load_environment("degenerate")


@pytest.fixture(scope="session")
def caches(skewed, hard_weak, degenerate):
    return {
        "skewed": OracleCache(skewed),
        "hard-weak": OracleCache(hard_weak),
        "degenerate": OracleCache(degenerate),
    }
