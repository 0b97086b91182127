import pytest

from mock_provider import MockProvider


@pytest.fixture
def mock_provider():
    server = MockProvider()
    yield server
    server.close()
