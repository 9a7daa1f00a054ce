"""Test suite for the finite-part transport library and its command-line front end."""
