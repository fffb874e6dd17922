"""Test package for the skillembed Python implementation."""
