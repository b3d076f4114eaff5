#!/usr/bin/env python
"""Wrapper for running the 'train' function directly from source tree."""

from scaleanchor.train import main

if __name__ == '__main__':
    main()
