"""Tests for noiseprobe."""
