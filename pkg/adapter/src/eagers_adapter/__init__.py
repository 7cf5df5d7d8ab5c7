"""Model-serving shim for the eagers wire contract.

Exposes explain, answer, and embed endpoints over HTTP JSON so evaluation
runs can talk to real checkpoints, or to a deterministic stand-in engine
when no models are installed.
"""

__version__ = "0.1.0"

# wire shapes this server implements; must match the client's constant
CONTRACT_VERSION = "1.0.0"
