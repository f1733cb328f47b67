"""Screening prioritisation engine for systematic reviews.

Ranks a per-topic document pool against a dense query vector, collects
batched explicit relevance feedback (simulated from qrels or live from
reviewers over HTTP), updates the query between batches, and evaluates
the resulting concatenated screening order.
"""

__version__ = "0.1.0"
