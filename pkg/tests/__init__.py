"""Tests for repmode."""
