'''Scale anchoring and Frequency Representation Learning for zero-shot super-resolution forecasting'''

__version__ = '0.1.0'
