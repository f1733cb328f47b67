"""Offline transformer encoder bridge.

Encodes corpus documents (title + abstract) and topic title queries with a
pretrained transformer and writes the screening engine's binary embedding
format, plus a sidecar metadata file recording the encoding choices.
"""

__version__ = "0.1.0"
