"""Socially compliant navigation generators with playback evaluation."""
