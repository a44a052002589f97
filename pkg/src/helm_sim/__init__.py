"""Curved-path following for underactuated marine vessels."""
