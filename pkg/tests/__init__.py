"""Tests for steiner-laminar."""
