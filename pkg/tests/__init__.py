"""Test suite for edge-scaler."""
