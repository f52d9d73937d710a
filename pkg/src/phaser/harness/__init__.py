"""Dataset I/O, synthetic domains, training and the diagnostic experiments."""
