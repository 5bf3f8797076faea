"""Reactive-scheduling emergency repair over an editable atomic-function library."""

__version__ = "0.1.0"
