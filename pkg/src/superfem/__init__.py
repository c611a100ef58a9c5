"""Superconvergent post-processing for CR, Morley, RT0 and HHJ elements."""
