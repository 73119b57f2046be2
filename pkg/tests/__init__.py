"""Test suite for oligodyn."""
