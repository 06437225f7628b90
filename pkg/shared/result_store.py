#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Shared utilities for writing experiment results.

This module provides reusable components for the result directory of a run:
- ResultStore: Writes text and figure files into one output directory and
  remembers every path it produced
- calculate_content_hash: sha256 digest used for determinism checks
"""

import hashlib
import logging
import os

from .errors import OutputError

logger = logging.getLogger(__name__)


def calculate_content_hash(content):
    """Calculate a hash of content for determinism and deduplication checks.

    Args:
        content (str or bytes): Content to hash

    Returns:
        str: Hex digest of the content
    """
    if isinstance(content, str):
        content = content.encode('utf-8')
    return hashlib.sha256(content).hexdigest()


class ResultStore:
    """Output directory of one run, with the list of files written into it"""

    def __init__(self, out_dir):
        """Initialize the store and create the directory.

        Args:
            out_dir (str): Directory receiving all result files
        """
        self.out_dir = out_dir
        self.paths = []

        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as e:
            raise OutputError(f"cannot create output directory {out_dir}: {str(e)}") from e

    def path_for(self, name):
        """Absolute-or-relative path of a file inside the output directory.

        Args:
            name (str): File name

        Returns:
            str: Joined path
        """
        return os.path.join(self.out_dir, name)

    def record(self, path):
        """Register a file written by someone else (e.g. matplotlib).

        Args:
            path (str): Path of the existing file

        Returns:
            str: The same path
        """
        if not os.path.exists(path):
            raise OutputError(f"expected output file is missing: {path}")

        if path not in self.paths:
            self.paths.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_text(self, name, text):
        """Write a text file with LF line endings and register it.

        Args:
            name (str): File name inside the output directory
            text (str): Content

        Returns:
            str: Path of the written file
        """
        path = self.path_for(name)
        try:
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text)
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            raise OutputError(f"cannot write {path}: {str(e)}") from e

        return self.record(path)
