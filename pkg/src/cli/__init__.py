"""Command-line interface for the oligodyn solvers."""
