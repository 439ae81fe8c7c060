"""Utility functions and helpers"""

from .file_utils import load_merge_maps, read_manifest, write_csv, write_json
from .logger import setup_logger, get_logger

__all__ = [
    'load_merge_maps',
    'read_manifest',
    'write_csv',
    'write_json',
    'setup_logger',
    'get_logger',
]
