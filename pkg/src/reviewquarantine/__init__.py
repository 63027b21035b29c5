"""Detect deceptive ratings by popular reviewers and quarantine their accounts."""

__version__ = "0.1.0"
