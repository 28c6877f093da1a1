"""
Test suite for the kinspec kernel, operator, spectral, semigroup and solver modules.
"""
