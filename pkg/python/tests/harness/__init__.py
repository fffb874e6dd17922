"""Tests for harness module."""
