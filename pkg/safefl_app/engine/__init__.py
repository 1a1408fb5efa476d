"""Numerical core of the workbench: models, data, the FL loop, attacks and detection."""
