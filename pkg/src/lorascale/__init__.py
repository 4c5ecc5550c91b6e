"""Scaled-down LoRaWAN packet-delivery-ratio experiments.

Subpackages cover the full workflow: LoRa airtime math, load-equivalent
experiment scaling, a seeded collision simulator, a mock network server
speaking newline-delimited JSON, the experiment orchestration
controller, and spreading-factor capacity analysis.
"""

__version__ = "0.1.0"
