"""
SwiptMDP Test Suite
"""
