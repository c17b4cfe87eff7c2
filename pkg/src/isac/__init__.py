"""ISAC CSI enhancement toolkit package."""
