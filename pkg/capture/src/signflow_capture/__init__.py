"""Webcam landmark capture client for the signflow recognizer.

Produces only the recognizer's bit-exact byte formats (LMK1 sequence files
and frame stream records); contains no recognition logic.
"""

__version__ = "0.1.0"
