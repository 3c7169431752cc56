"""Tests for the dd_sounder package."""
