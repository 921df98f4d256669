"""
Numerical core: domains, Brownian loops, loop-measure masses, signed soups,
correlators, the Gaussian layering field and chaos expansions.
"""
