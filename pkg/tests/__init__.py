"""Test suite for piezobeam."""
