"""Test suite for hdselect."""
