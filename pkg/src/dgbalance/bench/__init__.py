"""Benchmark driver: configs, scenarios, scaling sweeps and the CLI."""
