#!/usr/bin/env python
"""Wrapper for running the 'gen-data' function directly from source tree."""

from scaleanchor.gen_data import main

if __name__ == '__main__':
    main()
