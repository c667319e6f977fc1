"""mdnet: joint image/report diagnosis modeling at desk scale."""

__version__ = "0.1.0"
