#!/usr/bin/env python
"""Wrapper for running the 'probe' function directly from source tree."""

from scaleanchor.probe import main

if __name__ == '__main__':
    main()
