"""Tests for reinforce module."""
