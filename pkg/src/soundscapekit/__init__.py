"""soundscapekit: soundscape mixing, acoustic indices, and multi-label evaluation."""

__version__ = "0.1.0"
