"""Self-adaptation kernel: goal management, strategy management and enactment
over a deterministic simulated UAV."""

__version__ = "0.1.0"
