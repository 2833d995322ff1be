"""Single failure type for contract violations and bad configuration."""


class AdapterError(Exception):
    """Malformed input file, invalid configuration, or model/data mismatch."""
