"""Tests for hrl module."""
