"""Dense networks and variational quantum circuits on small SL/RL tasks."""

__version__ = "0.1.0"
