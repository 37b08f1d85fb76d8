"""Bundled parameter presets."""
