"""Tests for confir."""
