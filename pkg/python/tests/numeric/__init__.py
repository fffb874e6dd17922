"""Tests for numeric module."""
