"""Tests for cnnpost."""
