"""rodshell: discrete elastic rods and shells with implicit contact, for soft-robot simulation."""

__version__ = "0.3.0"
