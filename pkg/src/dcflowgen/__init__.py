"""Layer-4 TCP payload schedules for data centers from Layer-2 traffic statistics."""

__version__ = "0.1.0"
