"""Packaged data files: default gate pulse definitions and examples."""
