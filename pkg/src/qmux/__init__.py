"""Rate and fidelity models for quantum-network multiplexing."""

__version__ = "0.1.0"
