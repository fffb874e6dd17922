"""Tests for tabular module."""
