#!/usr/bin/env python
"""Wrapper for running the 'eval' function directly from source tree."""

from scaleanchor.evaluate import main

if __name__ == '__main__':
    main()
