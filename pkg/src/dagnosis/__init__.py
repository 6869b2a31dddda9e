"""Feature-wise conformal intervals conditioned on DAG Markov boundaries."""

__version__ = "0.1.0"
