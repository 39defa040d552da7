"""Real-time building sensor platform.

Fuses a spatial building hierarchy (crates), sensor metadata and live
sensor readings into a low-latency monitoring service: ingest channels,
threshold/sequence event detection, duplicated JSONL storage, HTTP query
APIs with on-demand SVG floor plans, and websocket push subscriptions.
"""

__version__ = "0.1.0"
