"""
Canonical JSON and SHA-256 config hashing
"""

import hashlib
import json


def canonical_json(document):
    """
    Serialise a JSON-compatible document deterministically

    Args:
        document (dict): JSON-compatible mapping

    Returns:
        str: Sorted-key, compact JSON text
    """
    return json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(document):
    """
    SHA-256 hex digest of the canonical JSON of a config

    Args:
        document (dict | pydantic.BaseModel): Configuration document

    Returns:
        str: 64-character hex digest
    """
    if hasattr(document, "model_dump"):
        document = document.model_dump(mode="json")
    return hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()
