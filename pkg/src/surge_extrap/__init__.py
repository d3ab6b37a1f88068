"""Learn coordinate-to-offset mappings for storm-surge forecasts with an
adversarial time-series model, and use them to bias-correct forecasts at
arbitrary locations."""

__version__ = "0.1.0"
