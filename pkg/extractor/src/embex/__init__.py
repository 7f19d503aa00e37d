"""Frozen-backbone embedding exporter.

Dumps image embeddings from a weight-frozen vision backbone and sentence
embeddings for class definitions as JSON Lines, in exactly the record and
class-metadata formats the training toolkit loads. The exporter never trains
or fine-tunes anything.
"""

__version__ = "0.1.0"
