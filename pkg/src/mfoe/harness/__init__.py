"""Experiment layer: data I/O, metrics, tuning, calibration and the command line."""
