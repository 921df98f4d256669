# Brownian loop soup Monte Carlo lab
__version__ = "0.1.0"
