"""Complexity-routed retrieval-augmented generation engine.

Queries are classified as simple or complex. Simple queries run a single
retrieve-rerank-generate pass; complex queries run an iterative agent loop
that accumulates evidence until a stopping condition fires. The engine is
exposed over an OpenAI-compatible HTTP server with feedback capture.
"""

__version__ = "0.1.0"
