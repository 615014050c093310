"""Desk-scale herd telemetry: simulated collars and shed stations over a
modeled LoRa uplink into an event-sourced, rules-driven aggregator."""

__version__ = "0.1.0"
