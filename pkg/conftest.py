"""Pytest wiring: configure Django and a test database, as ``manage.py test`` does."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'safefl_workbench.settings')
django.setup()

import pytest  # noqa: E402
from django.test.utils import (  # noqa: E402
    setup_databases,
    setup_test_environment,
    teardown_databases,
    teardown_test_environment,
)


@pytest.fixture(scope='session', autouse=True)
def _django_test_environment():
    setup_test_environment()
    old_config = setup_databases(verbosity=0, interactive=False)
    yield
    teardown_databases(old_config, verbosity=0)
    teardown_test_environment()
