"""Computation pipelines for sinhrobin."""
