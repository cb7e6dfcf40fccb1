"""
Test suite for landscapy.

This package contains tests for the potential-energy landscape simulator
and the meshless field reconstruction built on top of it.
"""
