"""Desk-scale Interledger payment network simulator."""

__version__ = "0.1.0"
