"""Toeplitz and global attention for labelling the layers of depth-ordered stacks."""

__version__ = '0.1.0'
