"""Grid-masked document VQA with explanation-guided evidence selection."""

__version__ = "0.1.0"
