"""Declarative experiment configs, run orchestration and the figure catalog."""
