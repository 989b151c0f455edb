"""Learns a function from labeled data while enforcing known auxiliary
truths, via a train/verify counterexample loop."""

__version__ = "0.1.0"
