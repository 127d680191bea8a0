"""Seedable cellular mobility simulator with attack injection, location and timeslot prediction and a clustering defense."""

__version__ = "0.1.0"
