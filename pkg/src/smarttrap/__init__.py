"""Smart insect trap toolkit: binary vision, trap control, capture telemetry, heatmaps."""

__version__ = "0.1.0"
