"""
Middlewares package

This package contains the error handling wrapper shared by the CLI commands.
"""
