"""Track-before-detect particle filtering for low-SNR targets in image sequences"""
