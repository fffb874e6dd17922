"""Tests for sac module."""
