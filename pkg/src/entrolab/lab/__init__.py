"""Batch orchestration: configs, suites, reports and the command line."""
