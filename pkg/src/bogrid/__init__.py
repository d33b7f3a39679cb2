"""Binary opacity grid scene reconstruction and baking."""

__version__ = "0.1.0"
