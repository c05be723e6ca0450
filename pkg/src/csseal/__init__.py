"""Key-seeded compressive-sensing encryption for biosignal streams."""

__version__ = "0.1.0"
