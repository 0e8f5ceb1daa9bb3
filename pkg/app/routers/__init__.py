"""
Routers for the qsim API.
"""
