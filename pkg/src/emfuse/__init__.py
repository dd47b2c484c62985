"""emfuse: EM sensor + monocular camera fusion for articulated body capture."""

__version__ = "0.1.0"
