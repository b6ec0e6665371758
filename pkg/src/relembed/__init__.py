"""relembed: relation-path embeddings from co-occurrence graphs.

Builds a bipartite co-occurrence graph between lexicalized dependency
paths and KB relations, trains a GRU encoder/decoder to reproduce the
normalized co-occurrence distributions, and merges the resulting scores
with an external extraction model's scores for ranked evaluation.
"""

__version__ = "0.1.0"
