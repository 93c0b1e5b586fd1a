"""Command-line handlers and their dependency wiring."""
