"""Core sinhrobin functionality."""
