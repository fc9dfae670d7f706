"""Simulation and verification of synchronized, coupled AIMD networks."""
