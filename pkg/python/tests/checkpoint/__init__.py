"""Tests for checkpoint module."""
