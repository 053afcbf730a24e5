"""Explicit-state CSL model checking for continuous-time Markov chains."""

__version__ = "0.1.0"
