"""Multi-agent pipeline for answering questions over discovered open datasets."""

__version__ = "0.1.0"
