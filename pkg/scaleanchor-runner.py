#!/usr/bin/env python
"""Convenience wrapper for running scaleanchor directly from source tree."""

from scaleanchor.__main__ import main

if __name__ == '__main__':
    main()
