"""Tests for envs module."""
