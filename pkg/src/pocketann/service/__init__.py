from .app import ServiceSettings, create_app
from .collections import CollectionManager
from .providers import EndpointConfig, ProviderClient, create_mock_provider_app

__all__ = [
    "CollectionManager",
    "EndpointConfig",
    "ProviderClient",
    "ServiceSettings",
    "create_app",
    "create_mock_provider_app",
]
