"""
wbprune - class-wise mask channel pruning for convolutional networks
"""

__version__ = "0.1.0"
