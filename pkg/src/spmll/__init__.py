"""Single-positive multi-label learning toolkit.

Builds a class-correlation graph from semantic embeddings, trains a
graph-refined cosine classifier on frozen-backbone embeddings with optional
FGSM/PGD adversarial augmentation, and evaluates with multi-label MAP plus
classic top-K accuracy.
"""

__version__ = "0.1.0"
