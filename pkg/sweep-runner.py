#!/usr/bin/env python
"""Wrapper for running the 'sweep' function directly from source tree."""

from scaleanchor.sweep import main

if __name__ == '__main__':
    main()
