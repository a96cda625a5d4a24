"""Six-state quantum key distribution under intercept/resend and collective attacks."""

__version__ = "0.1.0"
