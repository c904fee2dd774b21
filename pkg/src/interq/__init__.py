"""Communication/control co-design with a deep Q-learned scheduler."""

__version__ = "0.1.0"
