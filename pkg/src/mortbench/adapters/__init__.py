"""Bundled reference adapters speaking the NDJSON wire protocol."""
