"""
File formats, run configuration and config hashing
"""

from auformer.utils.config_hash import canonical_json, config_hash
from auformer.utils.weights_io import decode_tensors, encode_tensors, load_tensors, save_tensors

__all__ = ['canonical_json', 'config_hash', 'decode_tensors', 'encode_tensors', 'load_tensors', 'save_tensors']
