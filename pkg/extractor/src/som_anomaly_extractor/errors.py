class ExtractError(Exception):
    """Extraction pipeline failure (bad image, missing weights, wrong shapes)."""
