"""Experiment orchestration: configs, initial data, experiments, reports, CLI."""
