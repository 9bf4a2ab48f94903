"""Flow-based EDoS detection and mitigation with a seeded traffic harness."""

__version__ = "0.1.0"
